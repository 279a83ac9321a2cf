"""Command line interface.

Subcommands: subspace-bench, pipeline-bench, moments-check.  Each accepts
--config <path> (JSON; built-in defaults when omitted), --out <dir>,
--seeds N, and --threads N (0 = all cores; the ROBUSTMIX_THREADS variable
supplies the default when the flag is absent).  Exit codes: 0 success,
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import THREADS_ENV_VAR, ConfigError, default_config, load_config
from .experiments import run_experiment
from .output import emit_outputs, render_plots, write_manifest

__all__ = ["main"]

_EXPERIMENT_BY_COMMAND = {
    "subspace-bench": "subspace",
    "pipeline-bench": "pipeline",
    "moments-check": "moments",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustmix",
        description="Benchmarks for robust meta-learning of mixed linear regressions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in _EXPERIMENT_BY_COMMAND:
        p = sub.add_parser(command, help=f"run the {command.replace('-', ' ')}")
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seeds", type=int, default=None, help="number of seeds")
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help="worker count; 0 = all cores (env ROBUSTMIX_THREADS when absent)",
        )
        p.add_argument("--base-seed", type=int, default=None, help="master seed")
        p.add_argument("--no-plots", action="store_true", help="skip SVG rendering")
    return parser


def _summarize(records) -> str:
    by_key: dict[tuple, list[float]] = {}
    for r in records:
        by_key.setdefault((r.method, r.alpha, r.metric), []).append(r.value)
    lines = []
    for (method, alpha, metric), values in sorted(by_key.items()):
        lines.append(
            f"  {method:>14s} alpha={alpha:<8g} {metric:<24s} "
            f"mean={np.mean(values):.6g} (n={len(values)})"
        )
    return "\n".join(lines)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    experiment = _EXPERIMENT_BY_COMMAND[args.command]
    try:
        cfg = load_config(args.config) if args.config else default_config(experiment)
        if cfg.experiment != experiment:
            raise ConfigError(
                f"config declares experiment={cfg.experiment!r} but the "
                f"{args.command} command expects {experiment!r}"
            )
        if args.seeds is not None:
            if args.seeds < 1:
                raise ConfigError("seeds must be >= 1")
            cfg.seeds = args.seeds
        if args.base_seed is not None:
            cfg.base_seed = args.base_seed
        if args.no_plots:
            cfg.plots = False
        # precedence: flag > ROBUSTMIX_THREADS > config field > all cores
        if args.threads is not None:
            threads = args.threads
        elif os.environ.get(THREADS_ENV_VAR):
            threads = int(os.environ[THREADS_ENV_VAR])
        else:
            threads = cfg.threads
        out_dir = args.out if args.out is not None else Path(cfg.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    started = time.time()
    try:
        records = run_experiment(cfg, threads)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    elapsed = time.time() - started

    csv_path = emit_outputs(records, out_dir)
    write_manifest(out_dir, cfg.to_dict(), cfg.base_seed, elapsed, len(records))
    if cfg.plots:
        render_plots(csv_path, out_dir)
    print(f"{args.command}: {len(records)} records in {elapsed:.1f}s -> {csv_path}")
    print(_summarize(records))

    if experiment == "moments":
        failed = [r for r in records if r.metric == "passed" and r.value != 1.0]
        if failed:
            print("moments-check: FAILED checks: " + ", ".join(r.method for r in failed))
            return 3
        print("moments-check: all checks passed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
