"""Experiment orchestration: single runs, delta x m sweeps, and scaling runs."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from psvgp.config import RESOLVED_FILENAME, TrainRun
from psvgp.data import Dataset, load_dataset
from psvgp.errors import DataError
from psvgp.fabric import AUDIT_FILENAME, Fabric, TrainingResult, remote_probabilities, run_training
from psvgp.metrics import METRICS_FILENAME, MetricsReport, holdout_rmspe, predict_by_owner
from psvgp.partition import (
    BoundaryProbeSet,
    Grid,
    PartitionData,
    build_grid_partition,
    boundary_probes,
    count_summary,
    write_manifest,
)
from psvgp.svgp import VariationalState, load_models, save_models

log = logging.getLogger(__name__)

MODELS_DIRNAME = "models"
MANIFEST_FILENAME = "partitions.csv"
TRACE_FILENAME = "trace.csv"
RESULTS_FILENAME = "results.csv"
SUMMARY_FILENAME = "summary.csv"
SCALING_FILENAME = "scaling.csv"

SWEEP_COLUMNS = [
    "delta",
    "m",
    "rep",
    "seed",
    "status",
    "error",
    "rmspe",
    "boundary_rmsd",
    "holdout_rmspe",
    "seconds",
    "requests",
    "messages",
]


@dataclass(frozen=True)
class Experiment:
    """Data, partitions, and probes shared by every run over the same data and grid."""

    dataset: Dataset
    train: Dataset
    test: Dataset
    grid: Grid
    partitions: list[PartitionData]
    probes: BoundaryProbeSet


@dataclass(frozen=True)
class ExperimentResult:
    """One trained run and its metrics."""

    run: TrainRun
    experiment: Experiment
    training: TrainingResult
    report: MetricsReport

    @property
    def states(self) -> dict[int, VariationalState]:
        return self.training.states


def prepare(run: TrainRun, base: Path | None = None) -> Experiment:
    """Load or synthesize the data, hold out, partition, and place probes."""
    run.validate()
    dataset = load_dataset(run, base)
    train, test = dataset.holdout_split(run.holdout, run.data_seed)
    nx, ny = run.grid
    grid = Grid.over(dataset.coords, nx, ny)
    partitions = build_grid_partition(train.coords, train.responses, nx, ny, grid.bounds)
    probes = boundary_probes(partitions, run.probes_per_edge, run.wraparound)
    summary = count_summary(partitions)
    log.info(
        "%d observations in %d partitions (%d empty, counts %g..%g), %d probes",
        train.n,
        summary["partitions"],
        summary["empty"],
        summary["min"],
        summary["max"],
        len(probes),
    )
    return Experiment(dataset, train, test, grid, partitions, probes)


def evaluate(
    run: TrainRun,
    experiment: Experiment,
    models: dict[int, VariationalState],
    training: TrainingResult | None = None,
) -> MetricsReport:
    """Metrics of trained models on an experiment."""
    extra: dict[str, Any] = {}
    if run.holdout > 0:
        extra["holdout_rmspe"] = holdout_rmspe(
            models, experiment.grid, experiment.test.coords, experiment.test.responses
        )
    if training is not None:
        extra |= {
            "seconds": training.seconds,
            "seconds_per_iteration": training.seconds_per_iteration,
            "requests": training.requests,
            "messages": training.messages,
        }
    return MetricsReport.evaluate(models, experiment.partitions, experiment.probes, **extra)


def run_experiment(
    run: TrainRun,
    *,
    experiment: Experiment | None = None,
    fabric: Fabric | None = None,
    out: Path | None = None,
) -> ExperimentResult:
    """Train one run and score it; write its outputs when `out` is given."""
    run.validate()
    prepared = experiment if experiment is not None else prepare(run)
    training = run_training(run, prepared.partitions, fabric)
    report = evaluate(run, prepared, training.states, training)
    result = ExperimentResult(run, prepared, training, report)
    if out is not None:
        write_outputs(out, result)
    return result


def resolved(run: TrainRun) -> TrainRun:
    """The run with its data path made absolute."""
    if run.data == "synthetic":
        return run
    return run.override(data=str(Path(run.data).resolve()))


def write_outputs(out: Path, result: ExperimentResult) -> None:
    """Write config, models, audit, metrics, manifest, and trace."""
    out.mkdir(parents=True, exist_ok=True)
    resolved(result.run).save(out / RESOLVED_FILENAME)
    save_models(out / MODELS_DIRNAME, result.states)
    result.training.audit.save(out / AUDIT_FILENAME)
    result.report.save(out / METRICS_FILENAME)
    write_manifest(out / MANIFEST_FILENAME, result.experiment.partitions)
    if result.training.traces:
        rows = [
            {"partition": pid, "iteration": it, "elbo": value}
            for pid, trace in sorted(result.training.traces.items())
            for it, value in trace
        ]
        pd.DataFrame(rows).to_csv(out / TRACE_FILENAME, index=False)


def recompute_metrics(out: Path) -> MetricsReport:
    """Metrics from a run directory's resolved config and saved models."""
    config = out / RESOLVED_FILENAME
    if not config.exists():
        raise DataError(f"no {RESOLVED_FILENAME} in {out}")
    run = TrainRun.load(config)
    experiment = prepare(run, base=out)
    models = load_models(out / MODELS_DIRNAME)
    report = evaluate(run, experiment, models)

    previous = out / METRICS_FILENAME
    if previous.exists():
        # timing and traffic cannot be recomputed from checkpoints
        old = MetricsReport.load(previous)
        report.seconds = old.seconds
        report.seconds_per_iteration = old.seconds_per_iteration
        report.requests = old.requests
        report.messages = old.messages
    return report


def predict_surface(
    models: dict[int, VariationalState],
    grid: Grid,
    resolution: int,
    dataset: Dataset | None = None,
) -> pd.DataFrame:
    """Prediction lattice over the grid's bounds, in original units when `dataset` is given."""
    if resolution < 2:
        raise DataError(f"resolution must be at least 2, got {resolution}")
    box = grid.bounds
    xs, ys = np.meshgrid(
        np.linspace(box.xmin, box.xmax, resolution),
        np.linspace(box.ymin, box.ymax, resolution),
    )
    points = np.column_stack([xs.ravel(), ys.ravel()])
    mean, var, cells = predict_by_owner(models, grid, points)
    if dataset is not None:
        points = dataset.to_raw_coords(points)
        mean = dataset.to_raw_values(mean)
    return pd.DataFrame(
        {
            "lon": points[:, 0],
            "lat": points[:, 1],
            "partition": cells,
            "mean": mean,
            "sd": np.sqrt(var),
        }
    )


@dataclass(frozen=True)
class SweepResult:
    """Long-format results and per-(delta, m) summary."""

    results: pd.DataFrame
    summary: pd.DataFrame

    @property
    def failed(self) -> int:
        return int((self.results["status"] != "ok").sum())

    def save(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        self.results.to_csv(out / RESULTS_FILENAME, index=False)
        self.summary.to_csv(out / SUMMARY_FILENAME, index=False)


def _sweep_row(run: TrainRun, rep: int, experiment: Experiment) -> dict[str, Any]:
    row: dict[str, Any] = {"delta": run.delta, "m": run.m, "rep": rep, "seed": run.seed}
    try:
        report = run_experiment(run, experiment=experiment).report
    except Exception as e:
        log.warning("run delta=%g m=%d rep=%d failed: %s", run.delta, run.m, rep, e)
        return row | {
            "status": "failed",
            "error": str(e),
            "rmspe": math.nan,
            "boundary_rmsd": math.nan,
            "holdout_rmspe": math.nan,
            "seconds": math.nan,
            "requests": 0,
            "messages": 0,
        }
    return row | {
        "status": "ok",
        "error": "",
        "rmspe": report.rmspe,
        "boundary_rmsd": report.boundary_rmsd,
        "holdout_rmspe": report.holdout_rmspe,
        "seconds": report.seconds,
        "requests": report.requests,
        "messages": report.messages,
    }


def summarize(results: pd.DataFrame) -> pd.DataFrame:
    """Means and medians over successful replications per (delta, m)."""
    ok = results[results["status"] == "ok"]
    metrics = ["rmspe", "boundary_rmsd", "holdout_rmspe", "seconds", "messages"]
    summary = (
        ok.groupby(["delta", "m"], sort=True)[metrics].agg(["mean", "median"]).reset_index()
    )
    summary.columns = [
        "_".join(c for c in col if c) if isinstance(col, tuple) else col
        for col in summary.columns
    ]
    counts = results.groupby(["delta", "m"], sort=True)["status"]
    tally = pd.DataFrame(
        {
            "reps": counts.apply(lambda s: int((s == "ok").sum())),
            "failed": counts.apply(lambda s: int((s != "ok").sum())),
        }
    ).reset_index()
    table = tally.merge(summary, on=["delta", "m"], how="left")
    # relative to delta = 0 at the same m; NaN when that row is absent
    independent = table[table["delta"] == 0].set_index("m")
    for metric in ("rmspe", "boundary_rmsd"):
        baseline = table["m"].map(independent[f"{metric}_median"])
        table[f"{metric}_change"] = table[f"{metric}_median"] / baseline - 1.0
    return table


def run_sweep(
    base: TrainRun,
    deltas: Sequence[float],
    ms: Sequence[int],
    replications: int,
    *,
    parallel: bool = False,
    out: Path | None = None,
) -> SweepResult:
    """Train every (delta, m, replication); replication r uses seed base.seed + r."""
    base.validate()
    experiment = prepare(base)
    jobs = [
        (base.override(delta=delta, m=m, seed=base.seed + rep).validate(), rep)
        for delta in deltas
        for m in ms
        for rep in range(replications)
    ]
    log.info("sweep: %d runs", len(jobs))
    if parallel:
        with ThreadPoolExecutor() as pool:
            rows = list(pool.map(lambda job: _sweep_row(job[0], job[1], experiment), jobs))
    else:
        rows = [_sweep_row(run, rep, experiment) for run, rep in jobs]

    results = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    sweep = SweepResult(results, summarize(results))
    if out is not None:
        sweep.save(out)
        resolved(base).save(out / RESOLVED_FILENAME)
    return sweep


def add_speedup(table: pd.DataFrame) -> pd.DataFrame:
    """Speedup over the single-worker run of the same delta, and efficiency.

    Both are NaN for a delta without a procs=1 row.
    """
    single = table[table["procs"] == 1].groupby("delta")["seconds"].first()
    baseline = table["delta"].map(single)
    table = table.assign(speedup=baseline / table["seconds"])
    return table.assign(efficiency=table["speedup"] / table["procs"])


def run_scaling(
    base: TrainRun,
    proc_counts: Sequence[int],
    deltas: Sequence[float],
    *,
    out: Path | None = None,
) -> pd.DataFrame:
    """Wall time and message counts per (delta, worker count)."""
    base.validate()
    experiment = prepare(base)
    rows = []
    for delta in deltas:
        for procs in proc_counts:
            run = base.override(delta=delta, procs=procs).validate()
            result = run_experiment(run, experiment=experiment)
            routing = result.training.assignments[0].routing
            expected = run.iterations * sum(
                remote_probabilities(result.training.graph, routing, delta).values()
            )
            rows.append(
                {
                    "delta": delta,
                    "procs": procs,
                    "partitions_per_proc": run.n_partitions / procs,
                    "seconds": result.training.seconds,
                    "seconds_per_iteration": result.training.seconds_per_iteration,
                    "requests": result.training.requests,
                    "expected_requests": expected,
                    "messages": result.training.messages,
                    "rmspe": result.report.rmspe,
                    "boundary_rmsd": result.report.boundary_rmsd,
                }
            )
    table = add_speedup(pd.DataFrame(rows))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / SCALING_FILENAME, index=False)
        resolved(base).save(out / RESOLVED_FILENAME)
    return table
