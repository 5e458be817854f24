"""Command-line entry point.

Subcommands:
  train <config.json> [--seeds a,b,c]   run one experiment, or a sweep
  eval <checkpoint> <config.json>       evaluate a checkpoint on the config's dataset
  ot-bench [--sizes] [--eps] [--seed]   exact vs Sinkhorn vs semi-dual report

Exit codes: 0 success, 1 config/usage error, 2 numeric failure, 3 I/O error.
OTVQ_OUT overrides the config's output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .config import parse_config
from .experiment import (
    ExperimentError,
    build_dataset,
    format_bench_table,
    ot_bench,
    run_experiment,
    write_bench_csv,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; this CLI reserves 2 for numeric failures
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="otvq", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment")
    p_train.add_argument("config", help="path to a flat JSON config")
    p_train.add_argument("--seeds", default=None,
                         help="comma-separated seed sweep; each run writes to "
                              "<out_dir>/seed<k>")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("checkpoint", help="path to checkpoint.npz")
    p_eval.add_argument("config", help="config describing the dataset")

    p_bench = sub.add_parser("ot-bench", help="solver agreement report")
    p_bench.add_argument("--sizes", default="1x1,4x4,6x4,8x8",
                         help="comma-separated NxK pairs")
    p_bench.add_argument("--eps", default="1e-3,0.1",
                         help="comma-separated regularization strengths")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default=None,
                         help="CSV path (default ot_bench.csv in OTVQ_OUT or cwd)")
    return parser


def _parse_sizes(text: str):
    sizes = []
    for part in text.split(","):
        part = part.strip().lower()
        if not part:
            continue
        try:
            n, k = part.split("x")
            sizes.append((int(n), int(k)))
        except ValueError:
            raise _UsageError(f"bad --sizes entry '{part}', expected NxK")
    if not sizes:
        raise _UsageError("--sizes is empty")
    return sizes


def _parse_floats(text: str, flag: str):
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise _UsageError(f"bad {flag} entry in '{text}'")
    if not vals:
        raise _UsageError(f"{flag} is empty")
    return vals


def _parse_seeds(text: str):
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise _UsageError(f"bad --seeds entry in '{text}'")


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    env_out = os.environ.get("OTVQ_OUT")
    if env_out:
        cfg = dataclasses.replace(cfg, out_dir=env_out)
    if args.seeds is None:
        summary = run_experiment(cfg)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        raise _UsageError("--seeds is empty")
    for seed in seeds:
        sub_cfg = dataclasses.replace(
            cfg, seed=seed, out_dir=os.path.join(cfg.out_dir, f"seed{seed}"))
        summary = run_experiment(sub_cfg)
        print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .models import evaluate, load_checkpoint

    cfg = parse_config(args.config)
    state = load_checkpoint(args.checkpoint)
    dataset = build_dataset(cfg)
    report = evaluate(state, dataset)
    out = {
        "mse": report.mse,
        "psnr": report.psnr if np.isfinite(report.psnr) else None,
        "perplexity": [float(p) for p in report.perplexity],
        "samples": int(dataset.n),
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_bench(args) -> int:
    sizes = _parse_sizes(args.sizes)
    eps_list = _parse_floats(args.eps, "--eps")
    try:
        rows = ot_bench(sizes, eps_list, seed=args.seed)
    except ValueError as exc:
        raise _UsageError(str(exc))
    print(format_bench_table(rows))
    out_path = args.out
    if out_path is None:
        base = os.environ.get("OTVQ_OUT") or "."
        os.makedirs(base, exist_ok=True)
        out_path = os.path.join(base, "ot_bench.csv")
    write_bench_csv(rows, out_path)
    print(f"wrote {out_path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            return _cmd_eval(args)
        return _cmd_bench(args)
    except (_UsageError, ValueError) as exc:
        # ConfigError, IDX format errors, and checkpoint validation all
        # stem from bad inputs: exit 1
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
