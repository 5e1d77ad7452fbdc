"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import itertools
import json
import math
import sys
import time

import numpy as np
import pytest

from conftest import make_set
from rankshift import harness, shadow
from rankshift.corpus import synth_corpus
from rankshift.defense import FilterConfig, measure_fields
from rankshift.engine import (
    ContentScorer,
    EngineParams,
    psr_bruteforce,
    ranking_probability,
    sample_orders,
    sample_target_ranks,
    top1_distribution,
    utilities,
)
from rankshift.query_opt import Draft, LoopConfig, LoopState, RoundRecord, cost_report, run_loop
from rankshift.backend import MockBackend


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def test_c01_baseline_failure(verdict):
    start = time.perf_counter()
    c = make_set([f"item {i}" for i in range(10)])
    p = EngineParams(0.3, ContentScorer("constant", value=1.0))
    exact = float(top1_distribution(c, p)[-1])
    closed = math.exp(-3.0) / sum(math.exp(-0.3 * k) for k in range(1, 11))
    n = 100_000
    ranks = sample_target_ranks(utilities(c, p), 9, n, np.random.default_rng(0))
    est = float(np.mean(ranks == 1))
    sigma = math.sqrt(exact * (1 - exact) / n)
    elapsed = time.perf_counter() - start
    # the quoted 0.01833 is rounded to 5 places; the 1e-6 check runs against the closed form
    ok = (round(exact, 5) == 0.01833 and abs(exact - closed) <= 1e-6
          and abs(est - exact) <= 3 * sigma and exact <= 0.05 and elapsed < 10)
    verdict(1, ok, f"exact={exact:.7f} closed={closed:.7f} sampled={est:.5f} (3sigma={3 * sigma:.5f}) {elapsed:.2f}s")


def _fd_grad(obj, v, h=1e-6):
    eye = np.eye(v.size) * h
    return np.array([(obj.loss(v + e) - obj.loss(v - e)) / (2 * h) for e in eye])


def test_c02_gradient_correctness(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for c in synth_corpus(11, 100, 6):
        p = EngineParams(float(rng.uniform(0, 0.6)),
                         ContentScorer("cosine", float(rng.uniform(0.5, 10))))
        obj = shadow.ShadowObjective(c, p)
        v = rng.normal(size=len(obj.vocab)) + obj.q_hat * rng.uniform(0, 3)
        ga, gf = obj.grad(v), _fd_grad(obj, v)
        worst = max(worst, np.linalg.norm(ga - gf) / max(np.linalg.norm(ga), np.linalg.norm(gf)))
    elapsed = time.perf_counter() - start
    verdict(2, worst < 1e-5 and elapsed < 30,
            f"max relative error {worst:.2e} over 100 instances, {elapsed:.2f}s")


CELL = dict(lam=0.3, k0=10, p_target=0.8)


def _cell_inputs(delta=0.0):
    c, p = shadow.surrogate_instance(CELL["lam"], CELL["k0"])
    cfg = shadow.ShadowConfig()
    t, _ = shadow.theorem_inputs_for(c, p, cfg, CELL["p_target"], p0=math.exp(-3.0), delta=delta)
    return c, p, cfg, t


def test_c03_convergence_bound(verdict):
    start = time.perf_counter()
    unit = shadow.TheoremInputs(1.0, 1.0, 0.3, 10, 0.8, math.exp(-3.0))
    c, p, cfg, t = _cell_inputs()
    rep = shadow.verify_convergence(c, p, cfg, t)
    elapsed = time.perf_counter() - start
    ok = (shadow.theorem1_iterations(unit) == 12 and rep.reached
          and rep.iterations_used <= rep.bound and rep.monotone and elapsed < 60)
    verdict(3, ok, f"L={t.smoothness_L:.4g} beta={t.beta:.4g} bound={rep.bound} "
                   f"used={rep.iterations_used} P={rep.achieved_probability:.4f} "
                   f"(unit bound {shadow.theorem1_iterations(unit)}) {elapsed:.2f}s")


def test_c04_mismatch_bound(verdict):
    start = time.perf_counter()
    lines, ok = [], True
    for delta in (0.05, 0.1):
        c, p, cfg, t = _cell_inputs(delta)
        rep = shadow.verify_convergence(c, p, cfg, t)
        ok &= rep.perturbed_probability >= rep.floor and rep.gap <= rep.gap_bound + 0.01
        lines.append(f"delta={delta}: P={rep.perturbed_probability:.4f} >= {rep.floor:.4f}, "
                     f"gap={rep.gap:.4f} <= {rep.gap_bound + 0.01:.4f}")
    elapsed = time.perf_counter() - start
    verdict(4, ok and elapsed < 60, "; ".join(lines) + f" {elapsed:.2f}s")


def test_c05_engine_oracles(verdict):
    rng = np.random.default_rng(5)
    worst_freq = worst_sum = worst_psr = 0.0
    count = 0
    for n in range(1, 6):
        for c in synth_corpus(50 + n, 4, n):
            p = EngineParams(float(rng.uniform(0, 0.6)),
                             ContentScorer(str(rng.choice(["keyword", "cosine"])),
                                           float(rng.uniform(0.5, 5))))
            probs = top1_distribution(c, p)
            firsts = sample_orders(utilities(c, p), 100_000, rng)[:, 0]
            freq = np.bincount(firsts, minlength=n) / 100_000
            worst_freq = max(worst_freq, float(np.abs(freq - probs).max()))
            total = sum(ranking_probability(c, p, o) for o in itertools.permutations(range(n)))
            worst_sum = max(worst_sum, abs(total - 1))
            worst_psr = max(worst_psr, abs(psr_bruteforce(c, p, 1) - probs[c.target_index]))
            count += 1
    ok = worst_freq <= 0.01 and worst_sum <= 1e-9 and worst_psr <= 1e-12
    verdict(5, ok, f"{count} instances: freq err {worst_freq:.4f}, "
                   f"sum err {worst_sum:.1e}, psr@1 err {worst_psr:.1e}")


def test_c06_query_loop(verdict):
    p = EngineParams(0.3, ContentScorer("keyword", 4.0))
    sets = synth_corpus(7, 20, 5)
    hits, same = 0, True
    for c in sets:
        for strategy in ("reasoning", "review"):
            a = run_loop(c, strategy, LoopConfig(max_rounds=3, backend=MockBackend()), p)
            b = run_loop(c, strategy, LoopConfig(max_rounds=3, backend=MockBackend()), p)
            hits += a.succeeded and a.last_similarity >= 0.7
            same &= a.transcript == b.transcript and a.draft == b.draft
    rate = hits / (2 * len(sets))
    verdict(6, rate >= 0.9 and same, f"S>=0.7 within 3 rounds on {rate:.0%}; reproducible={same}")


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept")
    cfg = harness.ExperimentConfig.from_dict({
        "defense": {"filters": ["perplexity"]}, "out": str(out),
    })
    return cfg, harness.run(cfg)


def _by_method(result, method):
    return [i for i in result.instances if i["method"] == method]


def test_c07_defense_ordering(verdict, default_run):
    cfg, res = default_run
    ppl = {m: float(np.mean([i["ppl"] for i in _by_method(res, m)])) for m in harness.METHODS}
    ordering = (ppl["string"] >= 5 * ppl["baseline"] and ppl["string"] >= 2 * ppl["reasoning"]
                and ppl["reasoning"] > ppl["review"]
                and 2 / 3 <= ppl["review"] / ppl["baseline"] <= 1.5)

    strings = _by_method(res, "string|perplexity")
    string_strip = np.mean([i["stripped"] for i in strings])

    model = harness.reference_model(cfg.perplexity)
    fcfg = harness.filter_config(cfg.defense, model)
    sets = cfg.corpus.load()
    base_ppl = [measure_fields(c, fcfg, ["perplexity"]) for c in sets]
    n_items = sum(c.n for c in sets)
    base_strip = sum(len(r.stripped) for r in base_ppl) / n_items

    reasoning = [i["content"] for i in _by_method(res, "reasoning")]
    pat = FilterConfig()
    flagged = np.mean([bool(harness.dfn.filter_patterns(t, pat).strip) for t in reasoning])
    base_flag = sum(len(measure_fields(c, pat, ["pattern"]).stripped) for c in sets) / n_items

    ok = ordering and string_strip == 1.0 and base_strip <= 0.05 and flagged == 1.0 and base_flag == 0
    verdict(7, ok, "mean ppl " + " ".join(f"{m}={v:.1f}" for m, v in ppl.items())
            + f"; ppl strips string {string_strip:.0%} baseline {base_strip:.1%}"
            + f"; pattern flags reasoning {flagged:.0%} baseline {base_flag:.0%}")


def test_c08_defended_collapse(verdict, default_run):
    _, res = default_run

    def top1(method):
        ranks = [r.rank for r in res.trials if r.method == method]
        return float(np.mean(np.array(ranks) == 1)), len(ranks)

    def exact(method):
        return float(np.mean([i["psr_exact"]["top1"] for i in _by_method(res, method)]))

    base, n = top1("baseline")
    defended, _ = top1("string|perplexity")
    attacked, _ = top1("string")
    p = exact("baseline")
    tol = 3 * math.sqrt(2 * p * (1 - p) / n)
    ok = (abs(exact("string|perplexity") - p) <= 1e-12 and abs(defended - base) <= tol
          and attacked > base + tol)
    verdict(8, ok, f"PSR@1 baseline={base:.4f} string={attacked:.4f} "
                   f"string|perplexity={defended:.4f} (tol {tol:.4f})")


def test_c09_insertion_monotonicity(verdict):
    rng = np.random.default_rng(9)
    query = "quiet glass blender"
    drafts = {"low": "quiet", "mid": "quiet glass", "high": "quiet glass blender"}
    checked, violations = 0, 0
    for _ in range(20):
        c = make_set(["plain item one", "plain item two", "plain item three",
                      "glass jar", "quiet fan"], query=query)
        p = EngineParams(float(rng.uniform(0.05, 1.0)),
                         ContentScorer("keyword", float(rng.uniform(0.5, 6))))
        blocks = harness.insertion_blocks(c, p, drafts)
        top1 = {tuple(b["assignment"]): {s: d[0] for s, d in b["ranks"].items()} for b in blocks}
        for a, b in itertools.permutations(top1, 2):
            for s in drafts:
                if a.index(s) < b.index(s):
                    checked += 1
                    violations += top1[a][s] < top1[b][s] - 1e-15
    verdict(9, violations == 0 and len(top1) == 6,
            f"{checked} position comparisons over 20 engines x 3! assignments, {violations} violations")


def test_c10_cost_arithmetic(verdict):
    # 100 items, 310 rounds, 398257 tokens: 3.1 loops and 1284.7 tokens per loop
    states = []
    tokens = iter(np.full(310, 1284) + (np.arange(310) < 217))
    for i in range(100):
        rounds = 4 if i < 10 else 3
        records = [RoundRecord(r + 1, 0.5, int(next(tokens)), 0, 2) for r in range(rounds)]
        states.append(LoopState(rounds, Draft("x", "review"), transcript=records))
    rep = cost_report(states, price_per_1k=1.0)
    ok = (abs(rep.loops - 3.1) < 1e-12 and abs(rep.tokens_per_loop - 1284.7) < 1e-9
          and abs(rep.total_tokens - 3982.6) <= 0.1)
    verdict(10, ok, f"{rep.loops:g} x {rep.tokens_per_loop:g} = {rep.total_tokens:.2f} tokens per item")


def test_c11_determinism(verdict, tmp_path):
    cfg = harness.ExperimentConfig.from_dict({
        "corpus": {"n_sets": 4, "n_items": 6}, "trials": 50, "out": str(tmp_path),
        "defense": {"filters": ["perplexity", "pattern"]},
    })
    names = ("summary.csv", "summary.json", "trials.jsonl")
    harness.run(cfg)
    first = {n: (tmp_path / n).read_bytes() for n in names}
    harness.run(cfg)
    same = all((tmp_path / n).read_bytes() == first[n] for n in names)
    verdict(11, same, "summary.csv, summary.json and trials.jsonl byte-identical across reruns")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
