"""Command line entry point: ``kvnlab run`` and ``kvnlab emit-plot``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .errors import BackendMismatchError, CapExceededError, ConfigError, DimensionMismatchError, PreconditionError
from .io import emit_plot_data
from .runner import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kvnlab", description="Cesàro/density-zero convergence experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config and write its JSON report")
    run.add_argument("config", type=Path)
    run.add_argument("--horizon", type=int, help="override params.horizon")
    run.add_argument("--tol", type=_positive_float, help="override params.tolerance")
    run.add_argument("--out", help="override output.dir")

    plot = sub.add_parser("emit-plot", help="write (index, value) CSVs from a report's trajectories")
    plot.add_argument("report", type=Path)
    plot.add_argument("out", type=Path)
    plot.add_argument("--trajectory", help="emit only this trajectory")
    return parser


def _run(args) -> int:
    config = load_config(args.config, horizon=args.horizon, tol=args.tol, out=args.out)
    report, files = run_experiment(config)
    for f in files:
        print(f)
    verdict = report["results"].get("verdict")
    if verdict:
        print(verdict)
    return EXIT_OK


def _emit(args) -> int:
    if not args.report.is_file():
        raise ConfigError(f"report not found: {args.report}")
    try:
        report = json.loads(args.report.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.report}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    for f in emit_plot_data(report, args.out, args.trajectory):
        print(f)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        return _emit(args)
    except (ConfigError, BackendMismatchError, DimensionMismatchError, OSError) as exc:
        print(f"kvnlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, CapExceededError) as exc:
        print(f"kvnlab: precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
