"""Metrics command implementation."""

from __future__ import annotations

from argparse import ArgumentParser, Namespace, _SubParsersAction
from pathlib import Path
from typing import Callable

from psvgp.cli.output import Output
from psvgp.experiment import recompute_metrics
from psvgp.metrics import METRICS_FILENAME


def add_metrics_parser(
    subparsers: _SubParsersAction[ArgumentParser],
    add_global_args: Callable[[ArgumentParser], None],
) -> None:
    """Add metrics subcommand."""
    parser = subparsers.add_parser("metrics", help="recompute metrics from a run directory")
    add_global_args(parser)
    parser.add_argument("dir", help="directory written by `psvgp train`")
    parser.set_defaults(func=cmd_metrics)


def cmd_metrics(args: Namespace, output: Output) -> int:
    """Recompute metrics.json from saved models."""
    out = Path(args.dir)
    report = recompute_metrics(out)
    report.save(out / METRICS_FILENAME)
    for name, value in report.summary().items():
        output.metric(name, value)
    return 0
