"""Train command implementation."""

from __future__ import annotations

from argparse import ArgumentParser, Namespace, _SubParsersAction
from pathlib import Path
from typing import Callable

from psvgp.cli.options import add_run_args, run_from_args
from psvgp.cli.output import Output
from psvgp.experiment import run_experiment


def add_train_parser(
    subparsers: _SubParsersAction[ArgumentParser],
    add_global_args: Callable[[ArgumentParser], None],
) -> None:
    """Add train subcommand."""
    parser = subparsers.add_parser("train", help="train one run and write its outputs")
    add_global_args(parser)
    add_run_args(parser)
    parser.set_defaults(func=cmd_train)


def cmd_train(args: Namespace, output: Output) -> int:
    """Train, score, and save one run."""
    run = run_from_args(args, output)
    out = Path(run.out)
    output.verbose_info(
        f"Training {run.n_partitions} partitions on {run.procs} worker(s), "
        f"delta={run.delta:g}, m={run.m}, {run.iterations} iterations"
    )

    result = run_experiment(run, out=out)
    report = result.report
    output.metric("models", len(result.states))
    output.metric("rmspe", report.rmspe)
    output.metric("boundary_rmsd", report.boundary_rmsd)
    if run.holdout > 0:
        output.metric("holdout_rmspe", report.holdout_rmspe)
    output.metric("probes_skipped", report.probes_skipped)
    output.metric("requests", report.requests)
    output.metric("messages", report.messages)
    output.metric("seconds", report.seconds)
    output.info(f"Wrote {out}")
    output.json_output({"out": str(out)})
    return 0
