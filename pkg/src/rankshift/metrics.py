"""PSR@k, n-gram perplexity and result tables."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Protocol, Sequence

from .text import tokenize

UNK = "<unk>"
BOS = "<s>"
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+|\n+")
TABLE_COLUMNS = ("category", "model", "method", "top5", "top3", "top1", "mean_ppl")


def psr_at_k(ranks: Sequence[int], k: int) -> float:
    """Fraction of trials whose observed target rank is within the top ``k``."""
    if len(ranks) == 0:
        raise ValueError("empty rank list")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks are 1-based")
    return sum(1 for r in ranks if r <= k) / len(ranks)


class PerplexityScorer(Protocol):
    def perplexity(self, text: str) -> float: ...


@dataclass(frozen=True)
class NgramModel:
    """Additively smoothed n-gram model.

    ``P(w | ctx) = (count(ctx, w) + s) / (count(ctx) + s * V)`` where ``V`` counts
    the training vocabulary plus one unknown-word slot.
    """

    order: int
    counts: Mapping[tuple[str, ...], Mapping[str, int]]
    vocab: frozenset[str]
    vocab_size: int
    smoothing: float
    context_totals: Mapping[tuple[str, ...], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not self.smoothing > 0:
            raise ValueError("smoothing must be > 0")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if not self.context_totals:
            totals = {ctx: sum(nxt.values()) for ctx, nxt in self.counts.items()}
            object.__setattr__(self, "context_totals", totals)

    def _norm(self, tok: str) -> str:
        return tok if tok in self.vocab else UNK

    def prob(self, word: str, context: Sequence[str] = ()) -> float:
        ctx = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        ctx = tuple(t if t == BOS else self._norm(t) for t in ctx)
        c = self.counts.get(ctx, {}).get(self._norm(word), 0)
        total = self.context_totals.get(ctx, 0)
        return (c + self.smoothing) / (total + self.smoothing * self.vocab_size)

    def log_probs(self, tokens: Sequence[str]) -> list[float]:
        padded = [BOS] * (self.order - 1) + list(tokens)
        out = []
        for i, tok in enumerate(tokens):
            ctx = padded[i : i + self.order - 1]
            out.append(math.log(self.prob(tok, ctx)))
        return out

    def perplexity(self, text: str) -> float:
        return perplexity(text, self)


def sentences(text: str) -> list[list[str]]:
    """Tokenized sentences; each one is scored from a fresh ``<s>`` context."""
    out = [tokenize(part) for part in _SENTENCE_END.split(text)]
    return [s for s in out if s]


def train_ngram(corpus: Iterable[str], order: int = 2, smoothing: float = 0.1) -> NgramModel:
    if order < 1:
        raise ValueError("order must be >= 1")
    if not smoothing > 0:
        raise ValueError("smoothing must be > 0")
    docs = [sent for t in corpus for sent in sentences(t)]
    if not docs:
        raise ValueError("corpus is empty after tokenization")
    vocab = frozenset(tok for d in docs for tok in d)
    counts: dict[tuple[str, ...], Counter] = defaultdict(Counter)
    for d in docs:
        padded = [BOS] * (order - 1) + d
        for i, tok in enumerate(d):
            ctx = tuple(padded[i : i + order - 1])
            counts[ctx][tok] += 1
    frozen = {ctx: dict(sorted(nxt.items())) for ctx, nxt in sorted(counts.items())}
    return NgramModel(order, frozen, vocab, len(vocab) + 1, smoothing)


def perplexity(text: str, model: NgramModel) -> float:
    """``exp(-mean log P)`` over the text's tokens, sentence by sentence."""
    lps = [lp for sent in sentences(text) for lp in model.log_probs(sent)]
    if not lps:
        raise ValueError("text has no tokens")
    return math.exp(-sum(lps) / len(lps))


# ---------------------------------------------------------------------------
# Tables


@dataclass(frozen=True)
class TrialRecord:
    category: str
    model: str
    method: str
    set_index: int
    trial: int
    rank: int
    ppl: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category,
            "model": self.model,
            "method": self.method,
            "set_index": self.set_index,
            "trial": self.trial,
            "rank": self.rank,
            "ppl": self.ppl,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TrialRecord:
        ppl = d.get("ppl")
        return cls(
            str(d["category"]), str(d["model"]), str(d["method"]),
            int(d["set_index"]), int(d["trial"]), int(d["rank"]),
            None if ppl is None else float(ppl),
        )


ALL_CATEGORIES = "All"


def summarize(results: Iterable[TrialRecord], include_overall: bool = True) -> list[dict[str, Any]]:
    """One row per (category, model, method), plus an ``All`` row per (model, method).

    Rows keep first-seen order of (model, method); categories sort alphabetically
    with ``All`` last.
    """
    groups: dict[tuple[str, str, str], list[TrialRecord]] = defaultdict(list)
    method_order: list[tuple[str, str]] = []
    for r in results:
        key = (r.model, r.method)
        if key not in method_order:
            method_order.append(key)
        groups[(r.category, r.model, r.method)].append(r)
        if include_overall:
            groups[(ALL_CATEGORIES, r.model, r.method)].append(r)

    def cat_key(cat: str) -> tuple[int, str]:
        return (1, "") if cat == ALL_CATEGORIES else (0, cat)

    rows = []
    for model, method in method_order:
        cats = sorted({k[0] for k in groups if k[1:] == (model, method)}, key=cat_key)
        for cat in cats:
            recs = groups[(cat, model, method)]
            ranks = [r.rank for r in recs]
            ppls = [r.ppl for r in recs if r.ppl is not None]
            rows.append({
                "category": cat,
                "model": model,
                "method": method,
                "top5": psr_at_k(ranks, 5),
                "top3": psr_at_k(ranks, 3),
                "top1": psr_at_k(ranks, 1),
                "mean_ppl": sum(ppls) / len(ppls) if ppls else None,
                "n_trials": len(ranks),
            })
    return rows


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def rows_to_csv(rows: Sequence[Mapping[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(col)) for col in TABLE_COLUMNS])
    return buf.getvalue()


def rows_to_json(rows: Sequence[Mapping[str, Any]], extra: Mapping[str, Any] | None = None) -> str:
    payload: dict[str, Any] = {"columns": list(TABLE_COLUMNS), "rows": list(rows)}
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
