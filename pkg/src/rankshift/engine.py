"""Simulated synthesizing engine: a position-biased Plackett-Luce ranker.

The top-1 marginal follows the position-bias law

    log P[rank(i_k) = 1] = f(T(i_k), q) - lambda * k + c

with ``c`` the softmax log-normalizer.  Full rankings are drawn sequentially
(Plackett-Luce), which is the least-assumption completion of that marginal.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .corpus import CandidateSet, Query
from .text import token_set, tokenize

ENUMERATION_LIMIT = 6
SCORER_KINDS = ("keyword", "cosine", "constant")


@dataclass(frozen=True)
class ContentScorer:
    """Content relevance ``f``.

    ``keyword``: weight * (distinct query tokens present / distinct query tokens).
    ``cosine``: weight * cosine of term-frequency vectors.
    ``constant``: ``value`` regardless of text.
    """

    kind: str = "keyword"
    weight: float = 1.0
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in SCORER_KINDS:
            raise ValueError(f"unknown scorer kind {self.kind!r}; expected one of {SCORER_KINDS}")
        if not (math.isfinite(self.weight) and math.isfinite(self.value)):
            raise ValueError("scorer parameters must be finite")


@dataclass(frozen=True)
class EngineParams:
    lam: float = 0.3
    scorer: ContentScorer = field(default_factory=ContentScorer)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")


@dataclass(frozen=True)
class RankedList:
    order: tuple[int, ...]
    utilities: tuple[float, ...]
    mode: str

    def rank_of(self, index: int) -> int:
        """1-based rank of a candidate index."""
        return self.order.index(index) + 1


def cosine_tf(a_tokens: Sequence[str], b_tokens: Sequence[str]) -> float:
    ca, cb = Counter(a_tokens), Counter(b_tokens)
    if not ca or not cb:
        return 0.0
    dot = sum(v * cb.get(t, 0) for t, v in ca.items())
    na = math.sqrt(sum(v * v for v in ca.values()))
    nb = math.sqrt(sum(v * v for v in cb.values()))
    return dot / (na * nb)


def content_score(item_text: str, query: Query | str, scorer: ContentScorer) -> float:
    qtext = query.text if isinstance(query, Query) else query
    if scorer.kind == "constant":
        return scorer.value
    if scorer.kind == "keyword":
        qset = token_set(qtext)
        if not qset:
            return 0.0
        return scorer.weight * len(qset & token_set(item_text)) / len(qset)
    return scorer.weight * cosine_tf(tokenize(item_text), tokenize(qtext))


def utilities(
    c: CandidateSet, p: EngineParams, content_override: Mapping[int, float] | None = None
) -> np.ndarray:
    """Per-item utility ``f_k - lambda * k`` with 1-based retrieval position ``k``.

    ``content_override`` replaces the content score of selected items (used by the
    shadow optimizer for the relaxed target).
    """
    override = content_override or {}
    scores = [
        override[i] if i in override else content_score(rec.text, c.query, p.scorer)
        for i, rec in enumerate(c.items)
    ]
    positions = np.arange(1, c.n + 1, dtype=float)
    return np.asarray(scores, dtype=float) - p.lam * positions


def softmax(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("empty utility vector")
    z = np.exp(u - u.max())
    return z / z.sum()


def log_softmax(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    m = u.max()
    return u - (m + np.log(np.exp(u - m).sum()))


def top1_distribution(c: CandidateSet, p: EngineParams) -> np.ndarray:
    return softmax(utilities(c, p))


def _argmax_order(u: np.ndarray) -> tuple[int, ...]:
    # Stable sort on -u: equal utilities keep retrieval order.
    return tuple(int(i) for i in np.argsort(-u, kind="stable"))


def rank_argmax(c: CandidateSet, p: EngineParams) -> RankedList:
    u = utilities(c, p)
    return RankedList(_argmax_order(u), tuple(u.tolist()), "argmax")


def sample_order(u: np.ndarray, rng: np.random.Generator) -> tuple[int, ...]:
    """One sequential Plackett-Luce draw: pick ∝ exp(u) among remaining, repeat."""
    remaining = list(range(len(u)))
    order = []
    uu = np.asarray(u, dtype=float)
    while remaining:
        probs = softmax(uu[remaining])
        j = int(rng.choice(len(remaining), p=probs))
        order.append(remaining.pop(j))
    return tuple(order)


def rank_sample(c: CandidateSet, p: EngineParams, rng: np.random.Generator) -> RankedList:
    u = utilities(c, p)
    return RankedList(sample_order(u, rng), tuple(u.tolist()), "sampled")


def sample_orders(u: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized Plackett-Luce draws via Gumbel perturbation; shape (n_samples, n)."""
    u = np.asarray(u, dtype=float)
    g = rng.gumbel(size=(n_samples, u.size))
    return np.argsort(-(u[None, :] + g), axis=1, kind="stable")


def sample_target_ranks(
    u: np.ndarray, target: int, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """1-based ranks of ``target`` across vectorized draws."""
    orders = sample_orders(u, n_samples, rng)
    return np.argmax(orders == target, axis=1) + 1


def _check_permutation(order: Sequence[int], n: int) -> None:
    if len(order) != n or sorted(order) != list(range(n)):
        raise ValueError(f"{list(order)} is not a permutation of range({n})")


def order_probability(u: np.ndarray, order: Sequence[int]) -> float:
    u = np.asarray(u, dtype=float)
    _check_permutation(order, u.size)
    logp = 0.0
    remaining = list(order)
    for idx in order:
        sub = u[remaining]
        m = sub.max()
        logp += u[idx] - (m + math.log(float(np.exp(sub - m).sum())))
        remaining.remove(idx)
    return math.exp(logp)


def ranking_probability(c: CandidateSet, p: EngineParams, order: Sequence[int]) -> float:
    return order_probability(utilities(c, p), order)


def psr_bruteforce(c: CandidateSet, p: EngineParams, k: int) -> float:
    """Exact P(target within top-k), enumerating every permutation."""
    if c.n > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration limited to n <= {ENUMERATION_LIMIT}, got {c.n}")
    u = utilities(c, p)
    total = 0.0
    for order in itertools.permutations(range(c.n)):
        if order.index(c.target_index) < k:
            total += order_probability(u, order)
    return total


def rank_marginals(u: np.ndarray, max_n: int = 14) -> np.ndarray:
    """Exact Plackett-Luce rank marginals ``M[i, r] = P(rank(i) = r + 1)``.

    Dynamic programming over the set of already-placed items, so cost is
    O(2^n * n); guarded by ``max_n``.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    if n > max_n:
        raise ValueError(f"exact marginals limited to n <= {max_n}, got {n}")
    w = np.exp(u - u.max())
    total = float(w.sum())
    size = 1 << n
    # placed[mask] = P(the first popcount(mask) picks are exactly the items in mask)
    placed = np.zeros(size)
    placed[0] = 1.0
    wsum = np.zeros(size)
    for mask in range(1, size):
        low = mask & -mask
        wsum[mask] = wsum[mask ^ low] + w[low.bit_length() - 1]
    marg = np.zeros((n, n))
    for mask in range(size):
        pm = placed[mask]
        if pm == 0.0:
            continue
        r = bin(mask).count("1")
        rest = total - wsum[mask]
        if rest <= 0:
            continue
        for i in range(n):
            bit = 1 << i
            if mask & bit:
                continue
            q = pm * w[i] / rest
            marg[i, r] += q
            placed[mask | bit] += q
    return marg


def psr_exact(c: CandidateSet, p: EngineParams, k: int) -> float:
    """P(target within top-k) from the rank-marginal recursion."""
    marg = rank_marginals(utilities(c, p))
    return float(marg[c.target_index, :k].sum())


def permute_insertion(c: CandidateSet, assignment: Sequence[str]) -> CandidateSet:
    """Append ``assignment[j]`` to the item at retrieval position ``j``.

    Empty strings leave that item untouched.  Returns a new set.
    """
    from .query_opt import append_text

    if len(assignment) > c.n:
        raise ValueError(
            f"assignment covers {len(assignment)} positions but set has {c.n} items"
        )
    items = list(c.items)
    for j, text in enumerate(assignment):
        items[j] = append_text(items[j], text)
    return replace(c, items=tuple(items))
