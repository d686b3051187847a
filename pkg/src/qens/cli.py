"""Command-line entry point: ``qens <subcommand> [flags]``.

Exit codes: 0 success, 2 config error, 3 data error, 4 qubit-cap error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DataError, QubitCapError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CAP = 0, 2, 3, 4


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qens", description="Quantum ensemble benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config (YAML)")
        p.add_argument("--seed", type=_seed, help="override the config seed")
        p.add_argument("--workers", type=_positive, help="worker processes")
        p.add_argument("--mode", choices=("exact", "shots"), help="readout mode")
        p.add_argument("--shots", type=_positive, help="shots per probability estimate (default 8192)")
        p.add_argument("--out", help="run directory (default: the config's output)")

    common(sub.add_parser("gen-blobs", help="write the blob datasets and their splits"))
    common(sub.add_parser("search", help="hyperparameter search on each split's training rows"))
    common(sub.add_parser("train-eval", help="train, test and aggregate every (model, config, split)"))
    rep = sub.add_parser("report", help="summary text and plot data for a run directory")
    rep.add_argument("results_dir", nargs="?", help="run directory (default: --out)")
    rep.add_argument("--out", help="run directory")
    rep.add_argument("--test", choices=("welch", "paired"), help="t-test used for significance stars")
    pred = sub.add_parser("predict", help="class-1 probabilities for a CSV of feature rows")
    pred.add_argument("--model", required=True, help="model file written by train-eval")
    pred.add_argument("--input", required=True, help="CSV with a header row of feature names")
    pred.add_argument("--out", help="output CSV (default: stdout)")
    pred.add_argument("--seed", type=_seed, default=0)
    pred.add_argument("--mode", choices=("exact", "shots"), default="exact")
    pred.add_argument("--shots", type=_positive, default=8192)
    return parser


def resolve_config(args) -> tuple[ExperimentConfig, Path, Path]:
    cfg = load_config(args.config)
    overrides = {k: getattr(args, k) for k in ("seed", "workers", "mode", "shots") if getattr(args, k) is not None}
    if overrides:
        cfg = ExperimentConfig.model_validate({**cfg.model_dump(), **overrides})
    base = Path(args.config).resolve().parent
    out = Path(args.out) if args.out else Path(cfg.output)
    if not out.is_absolute() and not args.out:
        out = base / out
    return cfg, out, base


def run(args) -> int:
    if args.command == "report":
        target = args.results_dir or args.out
        if target is None:
            raise ConfigError("report needs a run directory")
        print(harness.report(target, args.test))
        return EXIT_OK
    if args.command == "predict":
        harness.predict_file(args.model, args.input, args.out, args.mode, args.shots, args.seed)
        return EXIT_OK
    cfg, out, base = resolve_config(args)
    if args.command == "gen-blobs":
        paths = harness.gen_blobs(cfg, out)
        print(f"wrote {len(paths)} files to {out / 'datasets'}")
    elif args.command == "search":
        manifest = harness.run_search(cfg, out, base)
        print(f"searched {len(manifest['entries'])} (dataset, model, split) cases; manifest in {out / 'search'}")
    elif args.command == "train-eval":
        rows = harness.train_eval(cfg, out, base)
        print(f"wrote {len(rows)} result rows to {out / 'results.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except QubitCapError as exc:
        print(f"qens: resource error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ConfigError as exc:
        print(f"qens: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"qens: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
