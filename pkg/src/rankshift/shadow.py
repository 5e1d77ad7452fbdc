"""Gradient-based content optimization against a differentiable stand-in ranker.

The target's content is relaxed to a real vector over a bag-of-words vocabulary (every token of the candidate set and
query, plus the filler token ``"!"``).  Its content score is
``weight * cos(v, q)`` with ``q`` the query's term-frequency vector, so the
top-1 log-probability, its gradient and Hessian-vector products are exact.

Loss is ``-log P(target ranked first)``:

    L(v) = -(u_t(v) - logsumexp(u)),   u_t(v) = weight * cos(v, q) - lambda * k_t
    grad L = -(1 - p_t) * weight * (q_hat - cos * v_hat) / |v|
"""

from __future__ import annotations

import csv
import io
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import CandidateSet
from .engine import EngineParams, log_softmax, softmax, utilities
from .text import tokenize

FILLER = "!"
_SHADOW_TOKEN = re.compile(r"[^\W_]+|!")


def shadow_tokens(text: str) -> list[str]:
    """Engine tokens plus each literal ``!`` as a filler token."""
    return _SHADOW_TOKEN.findall(text.lower())


def build_vocabulary(c: CandidateSet, extra: str = "") -> tuple[str, ...]:
    words = set(tokenize(c.query.text))
    for rec in c.items:
        words.update(tokenize(rec.text))
    words.update(tok for tok in shadow_tokens(extra) if tok != FILLER)
    return (FILLER,) + tuple(sorted(words))


def relax_text(text: str, vocab: Sequence[str]) -> np.ndarray:
    """Term-frequency vector of ``text`` over ``vocab`` (unknown tokens dropped)."""
    index = {tok: i for i, tok in enumerate(vocab)}
    v = np.zeros(len(vocab))
    for tok, n in Counter(shadow_tokens(text)).items():
        if tok in index:
            v[index[tok]] += n
    return v


@dataclass(frozen=True, eq=False)
class EmbeddingState:
    vector: np.ndarray
    vocab: tuple[str, ...]
    iteration: int = 0

    def __post_init__(self) -> None:
        if self.vector.shape != (len(self.vocab),):
            raise ValueError(
                f"vector length {self.vector.shape} does not match vocabulary size {len(self.vocab)}"
            )
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("embedding has non-finite entries")


@dataclass(frozen=True)
class ShadowConfig:
    eta: float | None = None  # None: 1 / estimated smoothness at the start point
    sigma: float = 0.05
    max_iters: int = 2000
    token_budget: int = 20
    init: str = "!" * 20
    p_target: float | None = None  # early stop on exact top-1 probability

    def __post_init__(self) -> None:
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if self.token_budget < 1:
            raise ValueError("token_budget must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


class ShadowObjective:
    """Top-1 negative log-likelihood of the relaxed target on a fixed candidate set."""

    def __init__(self, c: CandidateSet, p: EngineParams, vocab: Sequence[str] | None = None,
                 init: str = ""):
        self.c = c
        self.p = p
        self.vocab = tuple(vocab) if vocab is not None else build_vocabulary(c, init)
        self.t = c.target_index
        self.base_u = utilities(c, p)
        self.position_term = -p.lam * (self.t + 1)
        q = relax_text(c.query.text, self.vocab)
        qn = float(np.linalg.norm(q))
        self.q_hat = q / qn if qn > 0 else q
        self.kind = p.scorer.kind
        self.weight = p.scorer.weight
        self.constant = p.scorer.value

    def check(self, v: np.ndarray) -> None:
        if v.shape != (len(self.vocab),):
            raise ValueError(
                f"dimension mismatch: vector {v.shape} vs vocabulary {len(self.vocab)}"
            )

    def content(self, v: np.ndarray) -> float:
        if self.kind == "constant":
            return self.constant
        r = float(np.linalg.norm(v))
        if r == 0.0:
            return 0.0
        return self.weight * float(self.q_hat @ v) / r

    def _content_grad(self, v: np.ndarray) -> np.ndarray:
        r = float(np.linalg.norm(v))
        if self.kind == "constant" or r == 0.0:
            return np.zeros_like(v)
        vh = v / r
        cos = float(self.q_hat @ vh)
        return self.weight * (self.q_hat - cos * vh) / r

    def utilities(self, v: np.ndarray) -> np.ndarray:
        u = self.base_u.copy()
        u[self.t] = self.content(v) + self.position_term
        return u

    def loss(self, v: np.ndarray) -> float:
        self.check(v)
        return -float(log_softmax(self.utilities(v))[self.t])

    def prob(self, v: np.ndarray) -> float:
        return float(softmax(self.utilities(v))[self.t])

    def grad(self, v: np.ndarray) -> np.ndarray:
        self.check(v)
        p_t = self.prob(v)
        return -(1.0 - p_t) * self._content_grad(v)

    def hvp(self, v: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Hessian-vector product by central differences of the analytic gradient."""
        h = 1e-5 * max(1.0, float(np.linalg.norm(v)))
        return (self.grad(v + h * d) - self.grad(v - h * d)) / (2 * h)

    def perturbed_prob(self, v: np.ndarray, delta: float) -> float:
        """Top-1 probability when the target's content drops by delta and every other rises by delta."""
        u = self.utilities(v) + delta
        u[self.t] -= 2 * delta
        return float(softmax(u)[self.t])


def initial_state(obj: ShadowObjective, cfg: ShadowConfig) -> EmbeddingState:
    return EmbeddingState(relax_text(cfg.init, obj.vocab), obj.vocab, 0)


def loss(state: EmbeddingState, c: CandidateSet, p: EngineParams) -> float:
    return ShadowObjective(c, p, state.vocab).loss(state.vector)


def grad(state: EmbeddingState, c: CandidateSet, p: EngineParams) -> np.ndarray:
    return ShadowObjective(c, p, state.vocab).grad(state.vector)


def estimate_smoothness(
    obj: ShadowObjective,
    v: np.ndarray,
    iters: int = 60,
    start: np.ndarray | None = None,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Spectral-norm estimate of the loss Hessian at ``v`` by power iteration.

    Returns the largest ``|H d|`` seen over unit iterates and the final direction
    (pass it back as ``start`` to warm-start the next call).
    """
    if start is None:
        d = np.random.default_rng(seed).standard_normal(v.size)
    else:
        d = start.copy()
    d /= np.linalg.norm(d)
    best = 0.0
    for _ in range(iters):
        hd = obj.hvp(v, d)
        norm = float(np.linalg.norm(hd))
        best = max(best, norm)
        if norm == 0.0:
            break
        d = hd / norm
    return best, d


def analytic_smoothness_bound(obj: ShadowObjective, v: np.ndarray) -> float:
    """Upper bound ``(4w + w^2/4) / |v|^2`` on the Hessian norm for the cosine surrogate.

    Follows from ``|grad cos| <= 1/|v|``, ``|hess cos| <= 4/|v|^2`` and
    ``p(1-p) <= 1/4``.
    """
    r2 = float(v @ v)
    if obj.kind == "constant":
        return 0.0
    if r2 == 0.0:
        return math.inf
    w = abs(obj.weight)
    return (4 * w + w * w / 4) / r2


def _eta(obj: ShadowObjective, v: np.ndarray, cfg: ShadowConfig) -> float:
    if cfg.eta is not None:
        return cfg.eta
    L, _ = estimate_smoothness(obj, v)
    return 1.0 / L if L > 0 else 1.0


def step(
    state: EmbeddingState,
    c: CandidateSet,
    p: EngineParams,
    cfg: ShadowConfig,
    rng: np.random.Generator,
    obj: ShadowObjective | None = None,
    eta: float | None = None,
) -> EmbeddingState:
    """``v' = v - eta * grad + N(0, sigma^2 I)``."""
    obj = obj or ShadowObjective(c, p, state.vocab)
    eta = eta if eta is not None else _eta(obj, state.vector, cfg)
    v = state.vector - eta * obj.grad(state.vector)
    if cfg.sigma > 0:
        v = v + rng.normal(0.0, cfg.sigma, size=v.size)
    return EmbeddingState(v, state.vocab, state.iteration + 1)


@dataclass
class Trace:
    loss: list[float] = field(default_factory=list)
    top1_probability: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.loss)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("iteration", "loss", "top1_probability"))
        for i, (l, pr) in enumerate(zip(self.loss, self.top1_probability), start=1):
            w.writerow((i, repr(l), repr(pr)))
        return buf.getvalue()


def optimize(
    c: CandidateSet,
    p: EngineParams,
    cfg: ShadowConfig,
    rng: np.random.Generator,
    obj: ShadowObjective | None = None,
) -> tuple[EmbeddingState, Trace]:
    """Run up to ``max_iters`` steps; ``trace`` holds the loss after each step.

    ``trace.grad_norm[i]`` is the gradient norm at the iterate the i-th step
    started from.
    """
    obj = obj or ShadowObjective(c, p, init=cfg.init)
    state = initial_state(obj, cfg)
    trace = Trace()
    if cfg.max_iters == 0:
        return state, trace
    if cfg.p_target is not None and obj.prob(state.vector) >= cfg.p_target:
        return state, trace
    eta = _eta(obj, state.vector, cfg)
    for _ in range(cfg.max_iters):
        g = obj.grad(state.vector)
        trace.grad_norm.append(float(np.linalg.norm(g)))
        v = state.vector - eta * g
        if cfg.sigma > 0:
            v = v + rng.normal(0.0, cfg.sigma, size=v.size)
        state = EmbeddingState(v, state.vocab, state.iteration + 1)
        trace.loss.append(obj.loss(v))
        pr = obj.prob(v)
        trace.top1_probability.append(pr)
        if cfg.p_target is not None and pr >= cfg.p_target:
            break
    return state, trace


def reconstruct(state: EmbeddingState, cfg: ShadowConfig) -> tuple[str, float]:
    """Top-``token_budget`` projection by mass, plus cosine fidelity to the continuous vector."""
    v = state.vector
    m = cfg.token_budget
    if m > v.size:
        raise ValueError(f"token_budget {m} exceeds vocabulary size {v.size}")
    order = sorted(range(v.size), key=lambda i: (-v[i], i))[:m]
    text = " ".join(state.vocab[i] for i in order)
    indicator = np.zeros_like(v)
    indicator[order] = 1.0
    vn = float(np.linalg.norm(v))
    fidelity = float(v @ indicator) / (vn * math.sqrt(m)) if vn > 0 else 0.0
    return text, fidelity


# ---------------------------------------------------------------------------
# Convergence and mismatch bounds


@dataclass(frozen=True)
class TheoremInputs:
    smoothness_L: float
    beta: float
    lam: float
    k0: int
    p_target: float
    p0: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not self.smoothness_L > 0:
            raise ValueError("smoothness_L must be > 0")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if not 0 < self.p0 <= self.p_target <= 1:
            raise ValueError("need 0 < p0 <= p_target <= 1")
        if self.k0 < 0:
            raise ValueError("k0 must be >= 0")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")


def theorem1_iterations(t: TheoremInputs) -> int:
    """``ceil((2L / beta^2) * (lambda * k0 + ln(p_target / p0)))``."""
    x = (2 * t.smoothness_L / t.beta**2) * (t.lam * t.k0 + math.log(t.p_target / t.p0))
    return max(0, math.ceil(round(x, 10)))


def mismatch_floor(t: TheoremInputs) -> tuple[float, float]:
    """Achieved-probability floor ``p_target * e^-delta`` and gap bound ``p_target * (1 - e^-delta)``."""
    floor = t.p_target * math.exp(-t.delta)
    gap = t.p_target * -math.expm1(-t.delta)
    return floor, gap


@dataclass(frozen=True)
class ConvergenceReport:
    bound: int
    iterations_used: int
    initial_probability: float
    achieved_probability: float
    reached: bool
    monotone: bool
    delta: float
    perturbed_probability: float
    floor: float
    gap: float
    gap_bound: float
    mismatch_ok: bool

    @property
    def passed(self) -> bool:
        return self.reached and self.mismatch_ok

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def verify_convergence(
    c: CandidateSet, p: EngineParams, cfg: ShadowConfig, t: TheoremInputs
) -> ConvergenceReport:
    """Run noiseless descent for the theorem's iteration count and check both bounds.

    The mismatch check evaluates the final iterate under a scorer whose target
    content is lowered by delta and every other item's raised by delta.
    """
    if p.scorer.kind != "cosine":
        raise ValueError("convergence check needs the cosine scorer")
    bound = theorem1_iterations(t)
    eta = cfg.eta if cfg.eta is not None else 1.0 / t.smoothness_L
    run_cfg = ShadowConfig(eta=eta, sigma=0.0, max_iters=bound, token_budget=cfg.token_budget,
                           init=cfg.init, p_target=t.p_target)
    obj = ShadowObjective(c, p, init=cfg.init)
    state, trace = optimize(c, p, run_cfg, np.random.default_rng(0), obj=obj)
    p_init = obj.prob(initial_state(obj, run_cfg).vector)
    achieved = obj.prob(state.vector)
    losses = [obj.loss(initial_state(obj, run_cfg).vector)] + trace.loss
    monotone = all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    perturbed = obj.perturbed_prob(state.vector, t.delta)
    floor, gap_bound = mismatch_floor(t)
    gap = t.p_target - perturbed
    return ConvergenceReport(
        bound=bound,
        iterations_used=len(trace),
        initial_probability=p_init,
        achieved_probability=achieved,
        reached=achieved >= t.p_target,
        monotone=monotone,
        delta=t.delta,
        perturbed_probability=perturbed,
        floor=floor,
        gap=gap,
        gap_bound=gap_bound,
        mismatch_ok=perturbed >= floor and gap <= gap_bound + 0.01,
    )


@dataclass(frozen=True)
class SmoothnessEstimate:
    L: float
    beta: float
    iterations_to_target: int | None
    passes: int


def estimate_constants(
    c: CandidateSet,
    p: EngineParams,
    cfg: ShadowConfig,
    p_target: float,
    max_iters: int = 5000,
    max_passes: int = 5,
) -> SmoothnessEstimate:
    """Estimate the smoothness ``L`` and gradient floor ``beta`` along the descent path.

    ``L`` is the largest Hessian-norm estimate over every iterate of a noiseless
    run with step ``1/L``; the run is repeated with the larger value until it
    stabilises.  ``beta`` is the smallest gradient norm seen while the top-1
    probability is still below ``p_target``.
    """
    obj = ShadowObjective(c, p, init=cfg.init)
    v0 = initial_state(obj, cfg).vector
    L, direction = estimate_smoothness(obj, v0)
    if L <= 0:
        raise ValueError("loss is flat; smoothness is undefined")
    passes = 0
    while True:
        passes += 1
        run_cfg = ShadowConfig(eta=1.0 / L, sigma=0.0, max_iters=max_iters,
                               token_budget=cfg.token_budget, init=cfg.init, p_target=p_target)
        state = initial_state(obj, run_cfg)
        L_seen = L
        grads = []
        reached_at = None
        if obj.prob(state.vector) >= p_target:
            reached_at = 0
        v = state.vector
        for i in range(max_iters if reached_at is None else 0):
            g = obj.grad(v)
            grads.append(float(np.linalg.norm(g)))
            h, direction = estimate_smoothness(obj, v, iters=15, start=direction)
            L_seen = max(L_seen, h)
            v = v - g / L
            if obj.prob(v) >= p_target:
                reached_at = i + 1
                break
        if L_seen <= L * (1 + 1e-3) or passes >= max_passes:
            break
        L = L_seen
    beta = min(grads) if grads else float(np.linalg.norm(obj.grad(v0)))
    if beta <= 0:
        beta = float("nan")
    return SmoothnessEstimate(L, beta, reached_at, passes)


def theorem_inputs_for(
    c: CandidateSet,
    p: EngineParams,
    cfg: ShadowConfig,
    p_target: float,
    p0: float | None = None,
    delta: float = 0.0,
) -> tuple[TheoremInputs, SmoothnessEstimate]:
    est = estimate_constants(c, p, cfg, p_target)
    k0 = c.target_index + 1
    if p0 is None:
        p0 = math.exp(-p.lam * k0)
    t = TheoremInputs(est.L, est.beta, p.lam, k0, p_target, min(p0, p_target), delta)
    return t, est


def max_achievable_probability(c: CandidateSet, p: EngineParams) -> float:
    """Top-1 probability if the relaxed target pointed exactly along the query."""
    obj = ShadowObjective(c, p)
    q = obj.q_hat
    return obj.prob(q) if float(q @ q) > 0 else obj.prob(np.zeros(len(obj.vocab)))


SURROGATE_WEIGHT = 8.0


def surrogate_instance(
    lam: float, k0: int, seed: int = 0, weight: float = SURROGATE_WEIGHT
) -> tuple[CandidateSet, EngineParams]:
    """Synthetic set of ``k0`` items with the target last, scored by the cosine surrogate."""
    from .corpus import synth_corpus
    from .engine import ContentScorer

    if k0 < 1:
        raise ValueError("k0 must be >= 1")
    c = synth_corpus(seed, 1, k0)[0]
    return c, EngineParams(lam=lam, scorer=ContentScorer("cosine", weight=weight), seed=seed)


def initial_probability(c: CandidateSet, p: EngineParams, cfg: ShadowConfig) -> float:
    obj = ShadowObjective(c, p, init=cfg.init)
    return obj.prob(initial_state(obj, cfg).vector)
