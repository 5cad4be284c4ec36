"""Command-line entry point: run a configured experiment and emit results.

    catlab run <config.toml> [--seed N] [--workers K] [--out PATH]
                             [--format csv|json|summary] [--experiment NAME]

Exit codes: 0 success, 2 configuration error, 3 acceptance FAIL in summary
mode.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .experiments import ExperimentConfig, emit_report, run_experiment, summarize


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catlab")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("config", help="TOML experiment configuration")
    run.add_argument("--seed", type=int, default=None,
                     help="override master_seed")
    run.add_argument("--workers", type=int, default=None,
                     help="override worker count")
    run.add_argument("--out", default=None, help="override output path")
    run.add_argument("--format", default="csv",
                     choices=("csv", "json", "summary"))
    run.add_argument("--experiment", default=None,
                     help="override the experiment name")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExperimentConfig.from_toml(args.config)
        if args.seed is not None:
            config.master_seed = args.seed
        if args.workers is not None:
            config.workers = args.workers
        if args.out is not None:
            config.output_path = args.out
        if args.experiment is not None:
            config.experiment = args.experiment
        config.validate()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    rows = run_experiment(config)
    text = emit_report(rows, format=args.format, path=config.output_path)
    if config.output_path is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {len(rows)} rows to {config.output_path}")
    if args.format == "summary" and summarize(rows)[1]:
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
