"""Generator-optimizer loop over a black-box ranker."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from .backend import BackendError, TextBackend, TextRequest
from .corpus import CandidateSet, ProductRecord
from .engine import EngineParams, RankedList, rank_argmax, rank_sample

STRATEGIES = ("string", "reasoning", "review")
SEPARATOR = "\n\n"
DEFAULT_STRING = "!" * 20


@dataclass(frozen=True)
class Draft:
    text: str
    strategy: str
    version: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.version < 0:
            raise ValueError("version must be >= 0")


@dataclass(frozen=True)
class LoopConfig:
    tau: float = 0.7
    max_rounds: int = 5
    backend: TextBackend | None = None
    rank_mode: str = "argmax"
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.rank_mode not in ("argmax", "sampled"):
            raise ValueError("rank_mode must be 'argmax' or 'sampled'")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    similarity: float
    prompt_tokens: int
    completion_tokens: int
    target_rank: int

    @property
    def tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass
class LoopState:
    round: int
    draft: Draft
    last_ranking: RankedList | None = None
    last_similarity: float = 0.0
    transcript: list[RoundRecord] = field(default_factory=list)
    succeeded: bool = False


class LoopError(BackendError):
    """Backend failure inside the loop; ``state`` holds the partial transcript."""

    def __init__(self, message: str, state: LoopState):
        super().__init__(message)
        self.state = state


@lru_cache(maxsize=None)
def load_template(name: str) -> tuple[str, str]:
    """Return ``(system, user)`` for a bundled prompt template."""
    raw = resources.files("rankshift.templates").joinpath(f"{name}.txt").read_text("utf-8")
    system, _, user = raw.partition("\n")
    return system.strip(), user


def render(name: str, **slots: str) -> tuple[str, str]:
    system, user = load_template(name)
    for key, value in slots.items():
        user = user.replace("{" + key.replace("_", " ") + "}", value)
    return system, user


def _product_view(r: ProductRecord) -> dict[str, str]:
    return {
        "name": r.name,
        "price": r.price,
        "rating": r.rating,
        "num_reviews": r.num_reviews,
        "short_description": r.short_description,
        "long_description": r.long_description,
    }


def product_list_json(c: CandidateSet) -> str:
    return json.dumps([_product_view(r) for r in c.items], ensure_ascii=False)


def ranking_json(c: CandidateSet, order: Sequence[int]) -> str:
    return json.dumps([c.items[i].name for i in order], ensure_ascii=False)


def build_target_ranking(c: CandidateSet) -> tuple[int, ...]:
    """Target first, everything else in retrieval order."""
    if c.n == 0:
        raise ValueError("empty candidate set")
    t = c.target_index
    return (t,) + tuple(i for i in range(c.n) if i != t)


def append_text(item: ProductRecord, text: str) -> ProductRecord:
    if not text:
        return item
    base = item.long_description
    joined = base + SEPARATOR + text if base else text
    return replace(item, long_description=joined, appended=item.appended + (text,))


def append_content(item: ProductRecord, d: Draft) -> ProductRecord:
    return append_text(item, d.text)


def strip_appended(item: ProductRecord) -> ProductRecord:
    """Undo every ``append_text`` recorded in the item's provenance."""
    desc = item.long_description
    for text in reversed(item.appended):
        if desc.endswith(SEPARATOR + text):
            desc = desc[: -len(SEPARATOR + text)]
        elif desc == text:
            desc = ""
        else:
            raise ValueError("appended provenance does not match long_description")
    return replace(item, long_description=desc, appended=())


def apply_draft(c: CandidateSet, d: Draft) -> CandidateSet:
    return c.with_item(c.target_index, append_content(c.target, d))


def similarity(r: Sequence[int], r_target: Sequence[int]) -> float:
    """Normalized Kendall similarity: 1 - discordant / (n choose 2)."""
    if len(r) != len(r_target):
        raise ValueError("rankings differ in length")
    if sorted(r) != sorted(r_target) or len(set(r)) != len(r):
        raise ValueError("rankings must be permutations of the same index set")
    n = len(r)
    if n < 2:
        return 1.0
    pos = {item: i for i, item in enumerate(r)}
    seq = [pos[item] for item in r_target]
    pairs = n * (n - 1) // 2
    discordant = sum(1 for a in range(n) for b in range(a + 1, n) if seq[a] > seq[b])
    return (pairs - discordant) / pairs


def _call(backend: TextBackend, system: str, user: str, max_tokens: int):
    return backend.complete(TextRequest(system=system, user=user, max_tokens=max_tokens))


def generate_initial(
    c: CandidateSet,
    strategy: str,
    backend: TextBackend | None,
    string_text: str = DEFAULT_STRING,
    max_tokens: int = 1024,
) -> tuple[Draft, int, int]:
    """Version-0 draft plus the (prompt, completion) tokens spent producing it.

    The string strategy never calls the backend.
    """
    if strategy == "string":
        return Draft(string_text, "string", 0), 0, 0
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if backend is None:
        raise ValueError(f"strategy {strategy!r} needs a text backend")
    system, user = render(
        f"generator_{strategy}",
        user_query=c.query.text,
        product_list_in_JSON_format=product_list_json(c),
        target_item_information=json.dumps(_product_view(c.target), ensure_ascii=False),
    )
    resp = _call(backend, system, user, max_tokens)
    return Draft(resp.text.strip(), strategy, 0), resp.prompt_tokens, resp.completion_tokens


def refine(
    state: LoopState,
    c: CandidateSet,
    r_target: Sequence[int],
    backend: TextBackend,
    tau: float = 0.7,
    max_tokens: int = 1024,
) -> tuple[Draft, int, int]:
    """Ask the optimizer for the next draft version; only valid while S < tau."""
    if state.last_similarity >= tau:
        raise ValueError("refine called although similarity already meets tau")
    if state.last_ranking is None:
        raise ValueError("refine needs an observed ranking")
    system, user = render(
        "optimizer",
        desired_ranking=ranking_json(c, r_target),
        observed_ranking=ranking_json(c, state.last_ranking.order),
        current_draft=state.draft.text,
    )
    resp = _call(backend, system, user, max_tokens)
    d = state.draft
    return (
        Draft(resp.text.strip(), d.strategy, d.version + 1),
        resp.prompt_tokens,
        resp.completion_tokens,
    )


def run_loop(
    c: CandidateSet,
    strategy: str,
    cfg: LoopConfig,
    p: EngineParams,
    string_text: str = DEFAULT_STRING,
    rng: np.random.Generator | None = None,
) -> LoopState:
    """Append, rank, score against the target ranking, refine; stop at S >= tau."""
    r_target = build_target_ranking(c)
    backend = cfg.backend
    if cfg.rank_mode == "sampled" and rng is None:
        rng = np.random.default_rng(p.seed)
    try:
        draft, pt, ct = generate_initial(c, strategy, backend, string_text, cfg.max_tokens)
    except BackendError as exc:
        raise LoopError(f"generator failed: {exc}", LoopState(0, Draft("", strategy))) from exc
    state = LoopState(round=0, draft=draft)
    while True:
        modified = apply_draft(c, state.draft)
        if cfg.rank_mode == "argmax":
            ranking = rank_argmax(modified, p)
        else:
            ranking = rank_sample(modified, p, rng)
        s = similarity(ranking.order, r_target)
        state.round += 1
        state.last_ranking = ranking
        state.last_similarity = s
        state.transcript.append(
            RoundRecord(state.round, s, pt, ct, ranking.rank_of(c.target_index))
        )
        if s >= cfg.tau:
            state.succeeded = True
            return state
        if state.round >= cfg.max_rounds or backend is None:
            return state
        try:
            state.draft, pt, ct = refine(state, c, r_target, backend, cfg.tau, cfg.max_tokens)
        except BackendError as exc:
            raise LoopError(f"optimizer failed at round {state.round}: {exc}", state) from exc


@dataclass(frozen=True)
class CostReport:
    loops: float
    tokens_per_loop: float
    total_tokens: float
    cost: float


def cost_from_averages(loops: float, tokens_per_loop: float, price_per_1k: float) -> CostReport:
    total = loops * tokens_per_loop
    return CostReport(loops, tokens_per_loop, total, total / 1000.0 * price_per_1k)


def cost_report(states: LoopState | Sequence[LoopState], price_per_1k: float) -> CostReport:
    """Per-item averages: loops, tokens per loop, tokens per item and cost per item."""
    if isinstance(states, LoopState):
        states = [states]
    if not states or any(not s.transcript for s in states):
        raise ValueError("cost report needs nonempty transcripts")
    rounds = sum(len(s.transcript) for s in states)
    tokens = sum(r.tokens for s in states for r in s.transcript)
    loops = rounds / len(states)
    return cost_from_averages(loops, tokens / rounds, price_per_1k)
