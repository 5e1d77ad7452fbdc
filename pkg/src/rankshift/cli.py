"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 backend failure
(partial results are still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import harness
from .corpus import CorpusError, dump_corpus, parse_candidate_set, synth_corpus
from .defense import FILTERS
from .metrics import ALL_CATEGORIES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3


def _csv_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment configuration file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--strategy", type=_csv_list,
                   help="comma-separated subset of baseline,string,reasoning,review")
    p.add_argument("--backend", choices=("mock", "live"), help="text backend")
    p.add_argument("--trials", type=int, help="ranking draws per instance")
    p.add_argument("--defense", type=_csv_list,
                   help=f"comma-separated filters from {','.join(FILTERS)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankshift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a JSONL corpus and write the accepted sets")
    p.add_argument("path", nargs="?", help="input JSONL; omit to emit the synthetic corpus")
    p.add_argument("--n-sets", type=int, default=20)
    p.add_argument("--n-items", type=int, default=10)
    _common(p)

    p = sub.add_parser("validate", help="check a configuration file (and file corpus)")
    _common(p)

    for name, text in (
        ("simulate", "run every configured strategy and write summary tables"),
        ("optimize-shadow", "run the string strategy through the shadow optimizer"),
        ("optimize-query", "run the reasoning and review loops"),
        ("defend", "run strategies with defenses applied before ranking"),
        ("insertion-study", "rank competing drafts over all top-3 placements"),
        ("theory-suite", "check the convergence and mismatch bounds over a grid"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)

    p = sub.add_parser("report", help="rebuild summary tables from trials.jsonl")
    p.add_argument("trials_file", nargs="?", help="defaults to <out>/trials.jsonl")
    _common(p)
    return parser


def load_config(args: argparse.Namespace, command: str) -> harness.ExperimentConfig:
    raw: dict[str, Any] = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise harness.ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise harness.ConfigError("config must be a JSON object")
    if command == "optimize-shadow":
        raw["strategies"] = ["string"]
    elif command == "optimize-query":
        raw["strategies"] = ["reasoning", "review"]
    if args.strategy is not None:
        raw["strategies"] = args.strategy
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    if args.trials is not None:
        raw["trials"] = args.trials
    if args.backend is not None:
        raw["backend"] = {**(raw.get("backend") or {}), "backend": args.backend}
    if args.defense is not None:
        raw["defense"] = {**(raw.get("defense") or {}), "filters": args.defense}
    elif command == "defend" and not raw.get("defense"):
        raw["defense"] = {"filters": ["perplexity"]}
    return harness.ExperimentConfig.from_dict(raw)


def _ingest(args: argparse.Namespace, cfg: harness.ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.path is None:
        sets = synth_corpus(cfg.seed, args.n_sets, args.n_items)
        report: dict[str, Any] = {"source": "synth", "seed": cfg.seed, "accepted_sets": len(sets)}
    else:
        try:
            lines = Path(args.path).read_text("utf-8").splitlines()
        except OSError as exc:
            raise harness.ConfigError(f"cannot read {args.path}: {exc}") from exc
        sets, rejected = [], []
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                c, reasons = parse_candidate_set(json.loads(line))
            except (json.JSONDecodeError, CorpusError, ValueError, TypeError) as exc:
                rejected.append({"line": lineno, "reason": str(exc)})
                continue
            for r in reasons:
                rejected.append({"line": lineno, "reason": r})
            if c is None:
                rejected.append({"line": lineno, "reason": "every item rejected"})
            else:
                sets.append(c)
        report = {"source": str(args.path), "accepted_sets": len(sets), "rejected": rejected}
    dump_corpus(sets, out / "corpus.jsonl")
    (out / "ingest_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(sets)} candidate sets to {out / 'corpus.jsonl'}")
    return EXIT_OK


def _print_summary(result: harness.RunResult) -> None:
    for row in result.rows:
        if row["category"] == ALL_CATEGORIES:
            print(f"{row['method']:<28} top5={row['top5']:.3f} top3={row['top3']:.3f} "
                  f"top1={row['top1']:.3f}")
    print(f"results in {result.files['summary.csv'].parent}")


def run_command(args: argparse.Namespace) -> int:
    command = args.command
    cfg = load_config(args, command)
    if command == "ingest":
        return _ingest(args, cfg)
    if command == "validate":
        if cfg.corpus.source == "file":
            sets = cfg.corpus.load()
            print(f"corpus ok: {len(sets)} candidate sets")
        print("config ok")
        return EXIT_OK
    if command == "insertion-study":
        files = harness.run_insertion_study(cfg)
        print(f"results in {files['insertion.json'].parent}")
        return EXIT_OK
    if command == "theory-suite":
        report = harness.run_theory_suite(cfg)
        counts = report["counts"]
        print(" ".join(f"{k}={v}" for k, v in counts.items()))
        return EXIT_OK
    if command == "report":
        src = Path(args.trials_file) if args.trials_file else Path(cfg.out) / "trials.jsonl"
        try:
            files = harness.report_from_trials(src, cfg.out)
        except OSError as exc:
            raise harness.ConfigError(f"cannot read {src}: {exc}") from exc
        print(f"results in {files['summary.csv'].parent}")
        return EXIT_OK
    result = harness.run(cfg)
    _print_summary(result)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run_command(args)
    except harness.HarnessBackendError as exc:
        print(f"backend error: {exc} (partial results written)", file=sys.stderr)
        return EXIT_BACKEND
    except (harness.ConfigError, CorpusError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
