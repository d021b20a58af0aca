"""Predict command implementation."""

from __future__ import annotations

from argparse import ArgumentParser, Namespace, _SubParsersAction
from pathlib import Path
from typing import Callable

from psvgp.cli.output import Output
from psvgp.config import RESOLVED_FILENAME, TrainRun
from psvgp.errors import DataError
from psvgp.experiment import MODELS_DIRNAME, predict_surface, prepare
from psvgp.svgp import load_models

SURFACE_FILENAME = "surface.csv"


def add_predict_parser(
    subparsers: _SubParsersAction[ArgumentParser],
    add_global_args: Callable[[ArgumentParser], None],
) -> None:
    """Add predict subcommand."""
    parser = subparsers.add_parser("predict", help="predict a lattice from saved models")
    add_global_args(parser)
    parser.add_argument("dir", help="directory written by `psvgp train`")
    parser.add_argument("--resolution", type=int, default=100, help="points per side")
    parser.add_argument("--output", help=f"CSV path (default: DIR/{SURFACE_FILENAME})")
    parser.set_defaults(func=cmd_predict)


def cmd_predict(args: Namespace, output: Output) -> int:
    """Write predictive mean and sd over a lattice in original units."""
    out = Path(args.dir)
    config = out / RESOLVED_FILENAME
    if not config.exists():
        raise DataError(f"no {RESOLVED_FILENAME} in {out}")

    run = TrainRun.load(config)
    experiment = prepare(run, base=out)
    models = load_models(out / MODELS_DIRNAME)
    surface = predict_surface(models, experiment.grid, args.resolution, experiment.dataset)

    path = Path(args.output) if args.output else out / SURFACE_FILENAME
    path.parent.mkdir(parents=True, exist_ok=True)
    surface.to_csv(path, index=False)
    output.info(f"Wrote {len(surface)} predictions to {path}")
    output.json_output({"path": str(path), "points": len(surface)})
    return 0
