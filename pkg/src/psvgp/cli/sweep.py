"""Sweep command implementation."""

from __future__ import annotations

from argparse import ArgumentParser, Namespace, _SubParsersAction
from pathlib import Path
from typing import Callable

from psvgp.cli.options import add_run_args, float_list_arg, int_list_arg, run_from_args
from psvgp.cli.output import Output
from psvgp.experiment import RESULTS_FILENAME, SUMMARY_FILENAME, run_sweep

DEFAULT_DELTAS = [0.0, 0.0625, 0.125, 0.25, 0.5, 0.75, 1.0]
DEFAULT_MS = [5, 10, 20]
DEFAULT_REPS = 10


def add_sweep_parser(
    subparsers: _SubParsersAction[ArgumentParser],
    add_global_args: Callable[[ArgumentParser], None],
) -> None:
    """Add sweep subcommand."""
    parser = subparsers.add_parser("sweep", help="train every (delta, m) with replications")
    add_global_args(parser)
    parser.add_argument(
        "--deltas", type=float_list_arg, default=DEFAULT_DELTAS, help="comma-separated deltas"
    )
    parser.add_argument(
        "--ms", type=int_list_arg, default=DEFAULT_MS, help="comma-separated inducing counts"
    )
    parser.add_argument("--reps", type=int, default=DEFAULT_REPS, help="replications per cell")
    parser.add_argument("--parallel", action="store_true", help="run cells concurrently")
    add_run_args(parser)
    parser.set_defaults(func=cmd_sweep)


def cmd_sweep(args: Namespace, output: Output) -> int:
    """Run the sweep and write results.csv and summary.csv."""
    run = run_from_args(args, output)
    if args.reps < 1:
        output.error("Error: --reps must be at least 1")
        output.json_output({"error": "--reps must be at least 1"})
        return 2

    out = Path(run.out)
    total = len(args.deltas) * len(args.ms) * args.reps
    output.verbose_info(f"Sweeping {total} runs")
    sweep = run_sweep(run, args.deltas, args.ms, args.reps, parallel=args.parallel, out=out)

    output.metric("runs", len(sweep.results))
    output.metric("failed", sweep.failed)
    output.info(f"Wrote {out / RESULTS_FILENAME} and {out / SUMMARY_FILENAME}")
    output.json_output({"out": str(out)})
    return 1 if sweep.failed else 0
