"""Scaling command implementation."""

from __future__ import annotations

from argparse import ArgumentParser, Namespace, _SubParsersAction
from pathlib import Path
from typing import Callable

from psvgp.cli.options import add_run_args, float_list_arg, int_list_arg, run_from_args
from psvgp.cli.output import Output
from psvgp.experiment import SCALING_FILENAME, run_scaling


def add_scaling_parser(
    subparsers: _SubParsersAction[ArgumentParser],
    add_global_args: Callable[[ArgumentParser], None],
) -> None:
    """Add scaling subcommand."""
    parser = subparsers.add_parser("scaling", help="time training across worker counts")
    add_global_args(parser)
    parser.add_argument(
        "--proc-counts", type=int_list_arg, default=[1, 2, 4], help="comma-separated worker counts"
    )
    parser.add_argument(
        "--deltas", type=float_list_arg, default=[0.0, 0.5], help="comma-separated deltas"
    )
    add_run_args(parser)
    parser.set_defaults(func=cmd_scaling)


def cmd_scaling(args: Namespace, output: Output) -> int:
    """Run each (delta, workers) pair once and write scaling.csv."""
    run = run_from_args(args, output)
    out = Path(run.out)
    table = run_scaling(run, args.proc_counts, args.deltas, out=out)

    for row in table.itertuples(index=False):
        output.info(
            f"delta={row.delta:g} procs={row.procs}: {row.seconds:.3f}s, "
            f"{row.requests} requests (expected {row.expected_requests:.1f})"
        )
    output.info(f"Wrote {out / SCALING_FILENAME}")
    output.json_output({"out": str(out), "rows": table.to_dict(orient="records")})
    return 0
