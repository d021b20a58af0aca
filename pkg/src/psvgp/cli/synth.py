"""Synth command implementation."""

from __future__ import annotations

from argparse import ArgumentParser, Namespace, _SubParsersAction
from pathlib import Path
from typing import Callable

from psvgp.cli.options import run_from_args
from psvgp.cli.output import Output
from psvgp.data import export_csv, synthesize

BENCHMARK_FILENAME = "benchmark.csv"


def add_synth_parser(
    subparsers: _SubParsersAction[ArgumentParser],
    add_global_args: Callable[[ArgumentParser], None],
) -> None:
    """Add synth subcommand."""
    parser = subparsers.add_parser("synth", help="write the synthetic benchmark as CSV")
    add_global_args(parser)
    parser.add_argument("--size", type=int, help="points per side of the lattice")
    parser.add_argument("--lengthscale", type=float, help="field lengthscale")
    parser.add_argument("--variance", type=float, help="field variance")
    parser.add_argument("--precision", type=float, help="noise precision")
    parser.add_argument("--data-seed", type=int, help="random field seed")
    parser.add_argument("--out", help="output directory")
    parser.set_defaults(func=cmd_synth)


def cmd_synth(args: Namespace, output: Output) -> int:
    """Write the standard benchmark (or a variant) to CSV."""
    run = run_from_args(args, output).override(
        synth_size=args.size,
        synth_lengthscale=args.lengthscale,
        synth_variance=args.variance,
        synth_precision=args.precision,
    ).validate()
    dataset = synthesize(run)
    path = Path(run.out) / BENCHMARK_FILENAME
    export_csv(path, dataset.raw_coords, dataset.raw_values)

    output.info(f"Wrote {dataset.n} observations to {path}")
    output.json_output({"path": str(path), "observations": dataset.n})
    return 0
