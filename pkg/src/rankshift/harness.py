"""Experiment runner: configuration, seeded trials and deterministic result files."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import defense as dfn
from . import shadow
from .backend import BackendConfig, BackendError, TextBackend, make_backend
from .corpus import CandidateSet, CorpusError, ProductRecord, load_corpus, synth_corpus
from .engine import (
    ContentScorer,
    EngineParams,
    psr_bruteforce,
    rank_marginals,
    sample_target_ranks,
    utilities,
    ENUMERATION_LIMIT,
)
from .metrics import NgramModel, TrialRecord, rows_to_csv, rows_to_json, summarize, train_ngram
from .query_opt import (
    LoopConfig,
    LoopError,
    append_text,
    cost_report,
    generate_initial,
    run_loop,
)
from .text import derive_seed

METHODS = ("baseline", "string", "reasoning", "review")
EXACT_RANK_LIMIT = 14


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class HarnessBackendError(RuntimeError):
    """A backend call failed mid-run (CLI exit code 3); partial results were written."""


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class CorpusSource:
    source: str = "synth"
    seed: int = 7
    n_sets: int = 20
    n_items: int = 10
    path: str = ""

    def load(self) -> list[CandidateSet]:
        if self.source == "synth":
            return synth_corpus(self.seed, self.n_sets, self.n_items)
        return load_corpus(self.path)


@dataclass(frozen=True)
class PerplexityConfig:
    order: int = 2
    smoothing: float = 0.2
    reference_seed: int = 1001
    reference_sets: int = 1


@dataclass(frozen=True)
class DefenseSettings:
    filters: tuple[str, ...] = ("perplexity",)
    ppl_threshold: float = 200.0
    patterns: tuple[str, ...] = dfn.DEFAULT_PATTERNS
    max_words: int = 4000

    @property
    def label(self) -> str:
        return "+".join(self.filters)


@dataclass(frozen=True)
class TheoryGrid:
    lams: tuple[float, ...] = (0.1, 0.3, 0.5)
    k0s: tuple[int, ...] = (5, 10)
    p_targets: tuple[float, ...] = (0.5, 0.8)
    deltas: tuple[float, ...] = (0.0, 0.05, 0.1)
    seed: int = 0
    weight: float = shadow.SURROGATE_WEIGHT


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: CorpusSource = field(default_factory=CorpusSource)
    engine: EngineParams = field(
        default_factory=lambda: EngineParams(lam=0.3, scorer=ContentScorer("keyword", 4.0))
    )
    strategies: tuple[str, ...] = METHODS
    loop: LoopConfig = field(default_factory=LoopConfig)
    shadow: shadow.ShadowConfig = field(default_factory=shadow.ShadowConfig)
    defense: DefenseSettings | None = None
    backend: BackendConfig = field(default_factory=BackendConfig)
    perplexity: PerplexityConfig = field(default_factory=PerplexityConfig)
    theory: TheoryGrid = field(default_factory=TheoryGrid)
    trials: int = 100
    seed: int = 0
    out: str = "out"
    workers: int = 4
    price_per_1k_tokens: float = 0.0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.strategies:
            raise ConfigError("strategies must be nonempty")
        unknown = [s for s in self.strategies if s not in METHODS]
        if unknown:
            raise ConfigError(f"unknown strategies {unknown}; expected a subset of {METHODS}")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("strategies contain duplicates")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ExperimentConfig:
        try:
            return _config_from_dict(d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        try:
            raw = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        sh = self.shadow
        return {
            "corpus": dict(self.corpus.__dict__),
            "engine": {
                "lam": self.engine.lam,
                "seed": self.engine.seed,
                "scorer": dict(self.engine.scorer.__dict__),
            },
            "strategies": list(self.strategies),
            "loop": {
                "tau": self.loop.tau,
                "max_rounds": self.loop.max_rounds,
                "rank_mode": self.loop.rank_mode,
                "max_tokens": self.loop.max_tokens,
            },
            "shadow": {
                "eta": sh.eta, "sigma": sh.sigma, "max_iters": sh.max_iters,
                "token_budget": sh.token_budget, "init": sh.init, "p_target": sh.p_target,
            },
            "defense": None if self.defense is None else {
                "filters": list(self.defense.filters),
                "ppl_threshold": self.defense.ppl_threshold,
                "patterns": list(self.defense.patterns),
                "max_words": self.defense.max_words,
            },
            "backend": {
                k: v for k, v in self.backend.__dict__.items()
            },
            "perplexity": dict(self.perplexity.__dict__),
            "theory": {k: list(v) if isinstance(v, tuple) else v
                       for k, v in self.theory.__dict__.items()},
            "trials": self.trials,
            "seed": self.seed,
            "out": self.out,
            "workers": self.workers,
            "price_per_1k_tokens": self.price_per_1k_tokens,
        }


_TOP_KEYS = {
    "corpus", "engine", "strategies", "loop", "shadow", "defense", "backend",
    "perplexity", "theory", "trials", "seed", "out", "workers", "price_per_1k_tokens",
}


def _section(d: Mapping[str, Any], key: str, allowed: set[str]) -> dict[str, Any]:
    sec = d.get(key) or {}
    if not isinstance(sec, Mapping):
        raise ConfigError(f"{key} must be an object")
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {key}: {sorted(extra)}")
    return dict(sec)


def _config_from_dict(d: Mapping[str, Any]) -> ExperimentConfig:
    extra = set(d) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    kw: dict[str, Any] = {}

    corpus = _section(d, "corpus", {"source", "seed", "n_sets", "n_items", "path"})
    if corpus:
        src = CorpusSource(**corpus)
        if src.source not in ("synth", "file"):
            raise ConfigError("corpus.source must be 'synth' or 'file'")
        if src.source == "file" and not src.path:
            raise ConfigError("corpus.path is required for file corpora")
        if src.source == "synth" and (src.n_sets < 1 or src.n_items < 1):
            raise ConfigError("synth corpus needs n_sets >= 1 and n_items >= 1")
        kw["corpus"] = src

    if "engine" in d:
        eng = _section(d, "engine", {"lam", "scorer", "seed"})
        scorer = eng.pop("scorer", None) or {}
        if not isinstance(scorer, Mapping):
            raise ConfigError("engine.scorer must be an object")
        kw["engine"] = EngineParams(
            lam=float(eng.get("lam", 0.3)),
            scorer=ContentScorer(**scorer) if scorer else ContentScorer("keyword", 4.0),
            seed=int(eng.get("seed", 0)),
        )

    if "strategies" in d:
        strategies = d["strategies"]
        if isinstance(strategies, str) or not isinstance(strategies, Sequence):
            raise ConfigError("strategies must be a list")
        kw["strategies"] = tuple(strategies)

    if "loop" in d:
        kw["loop"] = LoopConfig(**_section(d, "loop", {"tau", "max_rounds", "rank_mode", "max_tokens"}))
    if "shadow" in d:
        kw["shadow"] = shadow.ShadowConfig(**_section(
            d, "shadow", {"eta", "sigma", "max_iters", "token_budget", "init", "p_target"}
        ))
    if d.get("defense") is not None:
        sec = _section(d, "defense", {"filters", "ppl_threshold", "patterns", "max_words"})
        filters = tuple(sec.pop("filters", ("perplexity",)))
        if not filters or any(f not in dfn.FILTERS for f in filters):
            raise ConfigError(f"defense.filters must be a nonempty subset of {dfn.FILTERS}")
        if "patterns" in sec:
            sec["patterns"] = tuple(sec["patterns"])
        kw["defense"] = DefenseSettings(filters=filters, **sec)
        dfn.FilterConfig(kw["defense"].ppl_threshold, max_words=kw["defense"].max_words)
    if "backend" in d:
        sec = _section(d, "backend", set(BackendConfig.__dataclass_fields__))
        kw["backend"] = BackendConfig(**sec)
        if kw["backend"].backend not in ("mock", "live"):
            raise ConfigError("backend.backend must be 'mock' or 'live'")
    if "perplexity" in d:
        kw["perplexity"] = PerplexityConfig(**_section(
            d, "perplexity", {"order", "smoothing", "reference_seed", "reference_sets"}
        ))
    if "theory" in d:
        sec = _section(d, "theory", {"lams", "k0s", "p_targets", "deltas", "seed", "weight"})
        for key in ("lams", "k0s", "p_targets", "deltas"):
            if key in sec:
                sec[key] = tuple(sec[key])
        kw["theory"] = TheoryGrid(**sec)
    for key, typ in (("trials", int), ("seed", int), ("out", str), ("workers", int),
                     ("price_per_1k_tokens", float)):
        if key in d:
            kw[key] = typ(d[key])
    cfg = ExperimentConfig(**kw)
    if cfg.corpus.source == "synth" and cfg.corpus.seed == cfg.perplexity.reference_seed:
        raise ConfigError("perplexity.reference_seed must differ from the evaluated corpus seed")
    return cfg


# ---------------------------------------------------------------------------
# Shared pieces


def reference_texts() -> list[str]:
    """Bundled general-English prose used to train the reference n-gram model."""
    raw = resources.files("rankshift.data").joinpath("reference.txt").read_text("utf-8")
    return [line for line in raw.splitlines() if line.strip()]


def reference_model(cfg: PerplexityConfig) -> NgramModel:
    """N-gram model over the bundled prose plus synthetic items from a disjoint seed."""
    texts = reference_texts()
    for c in synth_corpus(cfg.reference_seed, cfg.reference_sets, 10):
        texts.extend(r.text for r in c.items)
    return train_ngram(texts, cfg.order, cfg.smoothing)


def content_perplexity(item: ProductRecord, model: NgramModel) -> float:
    """Perplexity of the appended content, or of the whole record when nothing was appended."""
    text = dfn.inspected_text(item) or item.text
    return model.perplexity(text)


def filter_config(settings: DefenseSettings, model: NgramModel) -> dfn.FilterConfig:
    return dfn.FilterConfig(settings.ppl_threshold, settings.patterns, settings.max_words, model)


def engine_label(p: EngineParams) -> str:
    s = p.scorer
    if s.kind == "constant":
        return f"constant({s.value:g})/lam={p.lam:g}"
    return f"{s.kind}({s.weight:g})/lam={p.lam:g}"


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Main experiment


@dataclass
class JobResult:
    set_index: int
    strategy: str
    content: str
    instance: dict[str, Any]
    trials: list[TrialRecord]
    loop_state: Any = None


def _optimize(
    c: CandidateSet, strategy: str, cfg: ExperimentConfig, backend: TextBackend, seed: int
) -> tuple[CandidateSet, dict[str, Any], Any]:
    info: dict[str, Any] = {}
    if strategy == "baseline":
        return c, info, None
    if strategy == "string":
        state, trace = shadow.optimize(c, cfg.engine, cfg.shadow, np.random.default_rng(seed))
        text, fidelity = shadow.reconstruct(state, cfg.shadow)
        info.update(iterations=len(trace), fidelity=fidelity,
                    final_loss=trace.loss[-1] if len(trace) else None)
        return c.with_item(c.target_index, append_text(c.target, text)), info, None
    loop = LoopConfig(cfg.loop.tau, cfg.loop.max_rounds, backend, cfg.loop.rank_mode,
                      cfg.loop.max_tokens)
    state = run_loop(c, strategy, loop, cfg.engine, rng=np.random.default_rng(seed))
    info.update(
        rounds=state.round,
        succeeded=state.succeeded,
        similarity=state.last_similarity,
        transcript=[r.__dict__ for r in state.transcript],
    )
    return c.with_item(c.target_index, append_text(c.target, state.draft.text)), info, state


def _trial_ranks(c: CandidateSet, p: EngineParams, master: int, set_index: int,
                 method_index: int, trials: int) -> list[int]:
    u = utilities(c, p)
    ranks = []
    for t in range(trials):
        rng = np.random.default_rng(derive_seed(master, set_index, method_index, t))
        ranks.append(int(sample_target_ranks(u, c.target_index, 1, rng)[0]))
    return ranks


def _exact(c: CandidateSet, p: EngineParams) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if c.n <= EXACT_RANK_LIMIT:
        marg = rank_marginals(utilities(c, p), max_n=EXACT_RANK_LIMIT)[c.target_index]
        out["psr_exact"] = {f"top{k}": float(marg[:k].sum()) for k in (5, 3, 1)}
    if c.n <= ENUMERATION_LIMIT:
        out["psr_bruteforce"] = {f"top{k}": psr_bruteforce(c, p, k) for k in (5, 3, 1)}
    return out


def _run_job(
    cfg: ExperimentConfig,
    sets: Sequence[CandidateSet],
    set_index: int,
    strategy: str,
    backend: TextBackend,
    model: NgramModel,
) -> list[JobResult]:
    c = sets[set_index]
    s_idx = METHODS.index(strategy)
    opt_seed = derive_seed(cfg.seed, set_index, s_idx, 2**32)
    modified, info, state = _optimize(c, strategy, cfg, backend, opt_seed)
    variants = [(strategy, modified, s_idx, None)]
    if cfg.defense is not None and strategy != "baseline":
        fcfg = filter_config(cfg.defense, model)
        defended, report = dfn.apply_defenses(modified, fcfg, cfg.defense.filters)
        variants.append((f"{strategy}|{cfg.defense.label}", defended, s_idx + len(METHODS), report))

    model_label = engine_label(cfg.engine)
    results = []
    for method, cs, m_idx, report in variants:
        ppl = content_perplexity(cs.target, model)
        ranks = _trial_ranks(cs, cfg.engine, cfg.seed, set_index, m_idx, cfg.trials)
        instance = {
            "set_index": set_index,
            "method": method,
            "category": c.query.category,
            "query": c.query.text,
            "n_items": c.n,
            "content": dfn.inspected_text(cs.target),
            "ppl": ppl,
            **_exact(cs, cfg.engine),
            **(info if report is None else {}),
        }
        if report is not None:
            instance["defense"] = [e.to_dict() for e in report.entries if e.index == c.target_index]
            instance["stripped"] = c.target_index in report.stripped
        records = [
            TrialRecord(c.query.category, model_label, method, set_index, t, r, ppl)
            for t, r in enumerate(ranks)
        ]
        results.append(JobResult(set_index, method, instance["content"], instance, records, state))
    return results


@dataclass
class RunResult:
    rows: list[dict[str, Any]]
    instances: list[dict[str, Any]]
    trials: list[TrialRecord]
    files: dict[str, Path]
    error: str | None = None


def _emit(cfg: ExperimentConfig, jobs: list[JobResult], error: str | None,
          n_sets: int) -> RunResult:
    out = Path(cfg.out)
    trials = [r for j in jobs for r in j.trials]
    rows = summarize(trials)
    instances = [j.instance for j in jobs]
    states = [j.loop_state for j in jobs if j.loop_state is not None
              and "|" not in j.strategy]
    extra: dict[str, Any] = {
        "config": cfg.to_dict(),
        "instances": instances,
        "n_sets": n_sets,
        "complete": error is None,
    }
    if error:
        extra["error"] = error
    if states:
        rep = cost_report(states, cfg.price_per_1k_tokens)
        extra["cost"] = rep.__dict__
    files = {
        "summary.csv": _write(out, "summary.csv", rows_to_csv(rows)),
        "summary.json": _write(out, "summary.json", rows_to_json(rows, extra)),
        "trials.jsonl": _write(
            out, "trials.jsonl",
            "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in trials),
        ),
    }
    return RunResult(rows, instances, trials, files, error)


def run(cfg: ExperimentConfig, transport: Any = None) -> RunResult:
    """Optimize every (set, strategy), draw ``trials`` rankings each, write result files.

    Raises ``HarnessBackendError`` after writing whatever finished when a backend
    call fails.
    """
    try:
        sets = cfg.corpus.load()
    except (OSError, CorpusError) as exc:
        raise ConfigError(f"cannot load corpus: {exc}") from exc
    if not sets:
        raise ConfigError("corpus has no valid candidate sets")
    try:
        backend = make_backend(cfg.backend, transport)
    except BackendError as exc:
        raise ConfigError(str(exc)) from exc
    model = reference_model(cfg.perplexity)
    keys = [(i, s) for i in range(len(sets)) for s in cfg.strategies]

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(_run_job, cfg, sets, i, s, backend, model) for i, s in keys]
        done: list[JobResult] = []
        error = None
        for fut in futures:
            try:
                done.extend(fut.result())
            except (BackendError, LoopError) as exc:
                error = error or f"{type(exc).__name__}: {exc}"
    result = _emit(cfg, done, error, len(sets))
    if error:
        raise HarnessBackendError(error)
    return result


# ---------------------------------------------------------------------------
# Insertion-order study

INSERTION_STRATEGIES = ("string", "reasoning", "review")


def insertion_drafts(
    c: CandidateSet, cfg: ExperimentConfig, backend: TextBackend, seed: int
) -> dict[str, str]:
    """One fixed draft per strategy for this set (string from the shadow optimizer)."""
    state, _ = shadow.optimize(c, cfg.engine, cfg.shadow, np.random.default_rng(seed))
    drafts = {"string": shadow.reconstruct(state, cfg.shadow)[0]}
    for s in ("reasoning", "review"):
        drafts[s] = generate_initial(c, s, backend, max_tokens=cfg.loop.max_tokens)[0].text
    return drafts


def rank_distributions(
    c: CandidateSet, p: EngineParams, positions: Sequence[int], trials: int, seed: int
) -> tuple[list[list[float]], str]:
    """Rank distribution (index r-1 holds P(rank r)) for each listed position."""
    u = utilities(c, p)
    if c.n <= EXACT_RANK_LIMIT:
        marg = rank_marginals(u, max_n=EXACT_RANK_LIMIT)
        return [marg[j].tolist() for j in positions], "exact"
    out = []
    for j in positions:
        ranks = sample_target_ranks(u, j, trials, np.random.default_rng(derive_seed(seed, j)))
        counts = np.bincount(ranks, minlength=c.n + 1)[1:]
        out.append((counts / trials).tolist())
    return out, "sampled"


def insertion_blocks(
    c: CandidateSet, p: EngineParams, drafts: Mapping[str, str], trials: int = 1000, seed: int = 0
) -> list[dict[str, Any]]:
    """Six blocks, one per assignment of the three drafts to retrieval positions 1-3."""
    if c.n < 3:
        raise ValueError("insertion study needs at least 3 items")
    from .engine import permute_insertion

    names = list(drafts)
    blocks = []
    for perm in itertools.permutations(names):
        cs = permute_insertion(c, [drafts[s] for s in perm])
        dists, mode = rank_distributions(cs, p, range(len(perm)), trials, seed)
        blocks.append({
            "assignment": list(perm),
            "mode": mode,
            "ranks": {s: dists[j] for j, s in enumerate(perm)},
        })
    return blocks


def run_insertion_study(cfg: ExperimentConfig, transport: Any = None) -> dict[str, Path]:
    sets = cfg.corpus.load()
    try:
        backend = make_backend(cfg.backend, transport)
    except BackendError as exc:
        raise ConfigError(str(exc)) from exc
    report = []
    rows = []
    error = None
    for i, c in enumerate(sets):
        if c.n < 3:
            raise ConfigError(f"set {i} has fewer than 3 items")
        try:
            drafts = insertion_drafts(c, cfg, backend, derive_seed(cfg.seed, i, 2**33))
        except BackendError as exc:
            error = f"{type(exc).__name__}: {exc}"
            break
        blocks = insertion_blocks(c, cfg.engine, drafts, cfg.trials, derive_seed(cfg.seed, i))
        report.append({"set_index": i, "query": c.query.text, "blocks": blocks})
        for b in blocks:
            for pos, s in enumerate(b["assignment"], start=1):
                for r, prob in enumerate(b["ranks"][s], start=1):
                    rows.append((i, "/".join(b["assignment"]), s, pos, r, prob))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("set_index", "assignment", "strategy", "position", "rank", "probability"))
    for row in rows:
        w.writerow(row[:-1] + (f"{row[-1]:.6f}",))
    out = Path(cfg.out)
    payload = {"sets": report, "complete": error is None}
    if error:
        payload["error"] = error
    files = {
        "insertion.json": _write(out, "insertion.json", _dumps(payload)),
        "insertion.csv": _write(out, "insertion.csv", buf.getvalue()),
    }
    if error:
        raise HarnessBackendError(error)
    return files


# ---------------------------------------------------------------------------
# Convergence-bound suite


def theory_cells(grid: TheoryGrid, cfg: shadow.ShadowConfig | None = None) -> list[dict[str, Any]]:
    """One cell per (lambda, k0, p_target, delta) with a pass/fail/assumption_violated status.

    ``p0`` is ``e^{-lambda k0}`` unless the start point is worse than that
    presumes, in which case it drops to ``P_init * e^{lambda k0}`` so the bound's
    premise ``P_init >= p0 * e^{-lambda k0}`` still holds.  A cell is
    ``assumption_violated`` when ``p_target`` is out of reach for the relaxed
    target.
    """
    cfg = cfg or shadow.ShadowConfig()
    cells = []
    for lam, k0 in itertools.product(grid.lams, grid.k0s):
        c, p = shadow.surrogate_instance(lam, k0, grid.seed, grid.weight)
        p_init = shadow.initial_probability(c, p, cfg)
        reachable = shadow.max_achievable_probability(c, p)
        p0_start = min(math.exp(-lam * k0), p_init * math.exp(lam * k0))
        for p_target in grid.p_targets:
            p0 = min(p0_start, p_target)
            base = {
                "lam": lam, "k0": k0, "p_target": p_target, "p0": p0,
                "initial_probability": p_init, "max_probability": reachable,
            }
            if reachable <= p_target:
                for delta in grid.deltas:
                    cells.append({**base, "delta": delta, "status": "assumption_violated",
                                  "reason": "p_target unreachable"})
                continue
            try:
                t0, est = shadow.theorem_inputs_for(c, p, cfg, p_target, p0=p0)
            except ValueError as exc:
                for delta in grid.deltas:
                    cells.append({**base, "delta": delta, "status": "fail", "reason": str(exc)})
                continue
            for delta in grid.deltas:
                t = shadow.TheoremInputs(t0.smoothness_L, t0.beta, lam, k0, p_target, p0, delta)
                rep = shadow.verify_convergence(c, p, cfg, t)
                cells.append({
                    **base, "delta": delta,
                    "L": t.smoothness_L, "beta": t.beta, "passes": est.passes,
                    **rep.to_dict(),
                    "status": "pass" if rep.passed else "fail",
                })
    return cells


def run_theory_suite(cfg: ExperimentConfig) -> dict[str, Any]:
    cells = theory_cells(cfg.theory)
    report = {
        "grid": cfg.to_dict()["theory"],
        "cells": cells,
        "counts": {s: sum(1 for c in cells if c["status"] == s)
                   for s in ("pass", "fail", "assumption_violated")},
    }
    _write(Path(cfg.out), "theory_report.json", _dumps(report))
    return report


def report_from_trials(path: str | Path, out: str | Path) -> dict[str, Path]:
    """Rebuild summary tables from a trials.jsonl file."""
    recs = []
    for line in Path(path).read_text("utf-8").splitlines():
        if line.strip():
            recs.append(TrialRecord.from_dict(json.loads(line)))
    rows = summarize(recs)
    out = Path(out)
    return {
        "summary.csv": _write(out, "summary.csv", rows_to_csv(rows)),
        "summary.json": _write(out, "summary.json", rows_to_json(rows)),
    }
