"""Run flags shared by the training subcommands."""

from __future__ import annotations

from argparse import ArgumentParser, ArgumentTypeError, Namespace
from collections.abc import Callable
from typing import Any

from psvgp.cli.output import Output, get_config_path
from psvgp.config import (
    ADJACENCY_RULES,
    TRANSPORTS,
    TrainRun,
    parse_bool,
    parse_grid,
    parse_list,
)
from psvgp.errors import ConfigError

# flag dest -> TrainRun field
RUN_FLAGS = {
    "data": "data",
    "data_seed": "data_seed",
    "grid": "grid",
    "m": "m",
    "delta": "delta",
    "batch": "batch",
    "iters": "iterations",
    "procs": "procs",
    "seed": "seed",
    "lr": "lr",
    "probes_per_edge": "probes_per_edge",
    "adjacency": "adjacency",
    "wraparound": "wraparound",
    "holdout": "holdout",
    "transport": "transport",
    "watchdog": "watchdog",
    "trace_every": "trace_every",
    "out": "out",
}


def add_run_args(parser: ArgumentParser) -> None:
    """Add TrainRun override flags (unset flags keep config-file values)."""
    group = parser.add_argument_group("run options (override psvgp.toml)")
    group.add_argument("--data", help='"synthetic" or a lon,lat,value CSV path')
    group.add_argument("--data-seed", type=int, help="seed for synthetic data and holdout")
    group.add_argument("--grid", type=grid_arg, metavar="NX,NY", help="partition grid")
    group.add_argument("--m", type=int, help="inducing points per partition")
    group.add_argument("--delta", type=float, help="neighbor sampling weight in [0, 1]")
    group.add_argument("--batch", type=int, help="mini-batch size")
    group.add_argument("--iters", type=int, help="iterations per partition")
    group.add_argument("--procs", type=int, help="number of workers")
    group.add_argument("--seed", type=int, help="master seed")
    group.add_argument("--lr", type=float, help="Adam step size")
    group.add_argument("--probes-per-edge", type=int, help="boundary probes per shared edge")
    group.add_argument("--adjacency", choices=ADJACENCY_RULES, help="neighbor rule")
    group.add_argument("--wraparound", type=bool_arg, metavar="BOOL", help="join the x seam")
    group.add_argument("--holdout", type=float, help="fraction of observations withheld")
    group.add_argument("--transport", choices=TRANSPORTS, help="worker transport")
    group.add_argument("--watchdog", type=float, help="seconds without progress before abort")
    group.add_argument("--trace-every", type=int, help="record the ELBO every N iterations")
    group.add_argument("--out", help="output directory")


def run_from_args(args: Namespace, output: Output) -> TrainRun:
    """Defaults < psvgp.toml (or --config) < command-line flags."""
    config_path = get_config_path(args)
    run = TrainRun.load(config_path) if config_path else TrainRun()
    if config_path:
        output.verbose_info(f"Using config: {config_path}")

    overrides = {field: getattr(args, dest, None) for dest, field in RUN_FLAGS.items()}
    return run.override(**overrides).validate()


def _argtype(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    """Report parse failures as argparse usage errors."""

    def convert(value: str) -> Any:
        try:
            return parse(value)
        except ConfigError as e:
            raise ArgumentTypeError(str(e)) from e

    return convert


grid_arg = _argtype(parse_grid)
bool_arg = _argtype(parse_bool)
float_list_arg = _argtype(lambda v: parse_list(v, float))
int_list_arg = _argtype(lambda v: parse_list(v, int))
