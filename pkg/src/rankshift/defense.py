"""Pre-ranking filters that strip suspected optimization content from item text."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

from .corpus import CandidateSet, ProductRecord
from .metrics import PerplexityScorer
from .query_opt import SEPARATOR, strip_appended
from .text import tokenize, word_count

FILTERS = ("perplexity", "pattern", "length")

DEFAULT_PATTERNS: tuple[str, ...] = (
    "I'm exploring",
    "I'm analyzing",
    "I'm evaluating",
    "I'm examining",
    "I'm comparing",
    "I'm reviewing",
    "I'm explaining",
    "I'm outlining",
    "I'm breaking down",
    "I'm identifying",
    "I analyzed",
    "I evaluated",
    "I compared",
    "first",
    "next",
    "then",
    "finally",
    "step",
    "in conclusion",
    "this suggests",
)


class DefenseError(RuntimeError):
    """The perplexity scorer failed on an item."""


@dataclass(frozen=True)
class FilterConfig:
    ppl_threshold: float = 50.0
    patterns: tuple[str, ...] = DEFAULT_PATTERNS
    max_words: int = 4000
    ppl_scorer: PerplexityScorer | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.ppl_threshold > 0:
            raise ValueError("ppl_threshold must be positive")
        if self.max_words < 1:
            raise ValueError("max_words must be positive")


@dataclass(frozen=True)
class Verdict:
    filter: str
    strip: bool
    measurement: Any = None

    @property
    def label(self) -> str:
        return "strip" if self.strip else "keep"


def filter_perplexity(text: str, cfg: FilterConfig) -> Verdict:
    """Strip when the text's perplexity exceeds the threshold; empty text is kept."""
    if cfg.ppl_scorer is None:
        raise DefenseError("perplexity filter needs a scorer")
    if not tokenize(text):
        return Verdict("perplexity", False, None)
    try:
        ppl = float(cfg.ppl_scorer.perplexity(text))
    except Exception as exc:  # scorer implementations are pluggable
        raise DefenseError(f"perplexity scorer failed: {exc}") from exc
    return Verdict("perplexity", ppl > cfg.ppl_threshold, ppl)


def filter_patterns(text: str, cfg: FilterConfig) -> Verdict:
    """Case-insensitive substring match against the marker list."""
    low = _fold_apostrophes(text).lower()
    hits = [p for p in cfg.patterns if _fold_apostrophes(p).lower() in low]
    return Verdict("pattern", bool(hits), hits)


def _fold_apostrophes(s: str) -> str:
    return s.replace("’", "'").replace("‘", "'")


def filter_length(text: str, cfg: FilterConfig) -> Verdict:
    n = word_count(text)
    return Verdict("length", n > cfg.max_words, n)


_DISPATCH = {
    "perplexity": filter_perplexity,
    "pattern": filter_patterns,
    "length": filter_length,
}


def run_filter(name: str, text: str, cfg: FilterConfig) -> Verdict:
    try:
        fn = _DISPATCH[name]
    except KeyError:
        raise ValueError(f"unknown filter {name!r}; expected one of {FILTERS}") from None
    return fn(text, cfg)


def inspected_text(item: ProductRecord) -> str:
    """The item's appended optimization content ("" when nothing was appended)."""
    return SEPARATOR.join(item.appended)


def measure_fields(
    c: CandidateSet, cfg: FilterConfig, which: Sequence[str] = FILTERS
) -> FilterReport:
    """Score every item's whole long description; report only, nothing is stripped.

    For records whose provenance is unknown (e.g. scraped text).
    """
    entries = []
    for idx, item in enumerate(c.items):
        for name in _normalize_which(which):
            v = run_filter(name, item.long_description, cfg)
            entries.append(ItemReport(idx, name, v.label, v.measurement))
    return FilterReport(tuple(entries))


@dataclass(frozen=True)
class ItemReport:
    index: int
    filter: str
    verdict: str
    measurement: Any

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "filter": self.filter,
            "verdict": self.verdict,
            "measurement": self.measurement,
        }


@dataclass(frozen=True)
class FilterReport:
    entries: tuple[ItemReport, ...] = ()

    @property
    def stripped(self) -> frozenset[int]:
        return frozenset(e.index for e in self.entries if e.verdict == "strip")

    def to_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.entries], indent=2, sort_keys=True) + "\n"


def _normalize_which(which: Iterable[str]) -> tuple[str, ...]:
    out = []
    for name in which:
        if name not in FILTERS:
            raise ValueError(f"unknown filter {name!r}; expected one of {FILTERS}")
        if name not in out:
            out.append(name)
    return tuple(sorted(out, key=FILTERS.index))


def apply_defenses(
    c: CandidateSet, cfg: FilterConfig, which: Sequence[str] = FILTERS
) -> tuple[CandidateSet, FilterReport]:
    """Run the chosen filters on every item's appended content.

    A strip verdict from any filter restores the item's pre-append record; items
    are never removed from the set.  Items with nothing appended are reported as
    kept without measurement.
    """
    names = _normalize_which(which)
    entries: list[ItemReport] = []
    items = list(c.items)
    for idx, item in enumerate(c.items):
        text = inspected_text(item)
        strip = False
        for name in names:
            if not text:
                entries.append(ItemReport(idx, name, "keep", None))
                continue
            v = run_filter(name, text, cfg)
            entries.append(ItemReport(idx, name, v.label, v.measurement))
            strip = strip or v.strip
        if strip:
            items[idx] = strip_appended(item)
    return replace(c, items=tuple(items)), FilterReport(tuple(entries))
