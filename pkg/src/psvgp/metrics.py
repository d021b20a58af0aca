"""Accuracy and boundary-smoothness metrics for a set of local models."""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Self

import numpy as np
import numpy.typing as npt
import pandas as pd

from psvgp.errors import DataError
from psvgp.gp import Array
from psvgp.partition import BoundaryProbeSet, Grid, PartitionData
from psvgp.svgp import VariationalState, predict

log = logging.getLogger(__name__)

Models = Mapping[int, VariationalState]

METRICS_FILENAME = "metrics.json"


def _require(models: Models, partition: PartitionData) -> VariationalState:
    model = models.get(partition.id)
    if model is None:
        raise DataError(f"no model for non-empty partition {partition.id}")
    return model


def residuals(models: Models, partitions: Sequence[PartitionData]) -> dict[int, Array]:
    """y minus the owning model's predictive mean, per non-empty partition."""
    out: dict[int, Array] = {}
    for part in partitions:
        if part.n == 0:
            continue
        mean, _ = predict(_require(models, part), part.coords)
        out[part.id] = part.responses - mean
    return out


def rmspe(models: Models, partitions: Sequence[PartitionData]) -> float:
    """Root-mean-square prediction error over all observations."""
    errors = list(residuals(models, partitions).values())
    if not errors:
        raise DataError("no observations to score")
    pooled = np.concatenate(errors)
    return float(np.sqrt(np.mean(pooled**2)))


def boundary_differences(models: Models, probes: BoundaryProbeSet) -> tuple[Array, int]:
    """Prediction differences across shared edges, and the number of skipped probes.

    A probe is skipped when either side has no model.
    """
    groups: dict[tuple[int, int], list[int]] = defaultdict(list)
    for i, probe in enumerate(probes.probes):
        groups[(probe.a, probe.b)].append(i)

    side_a, side_b = probes.coords()
    diffs: list[Array] = []
    skipped = 0
    for (a, b), rows in sorted(groups.items()):
        if a not in models or b not in models:
            skipped += len(rows)
            continue
        mean_a, _ = predict(models[a], side_a[rows])
        mean_b, _ = predict(models[b], side_b[rows])
        diffs.append(mean_a - mean_b)
    return (np.concatenate(diffs) if diffs else np.zeros(0)), skipped


def boundary_rmsd(models: Models, probes: BoundaryProbeSet) -> float:
    """Root-mean-square disagreement of neighboring models on shared edges (NaN if none)."""
    diffs, _ = boundary_differences(models, probes)
    if diffs.size == 0:
        return math.nan
    return float(np.sqrt(np.mean(diffs**2)))


def predict_by_owner(
    models: Models, grid: Grid, coords: npt.ArrayLike
) -> tuple[Array, Array, npt.NDArray[np.int64]]:
    """Mean, variance, and owning cell per point; NaN where the cell has no model."""
    points = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    cells = grid.locate(points)
    mean = np.full(points.shape[0], np.nan)
    var = np.full(points.shape[0], np.nan)
    for cell in np.unique(cells):
        model = models.get(int(cell))
        if model is None:
            continue
        rows = cells == cell
        mean[rows], var[rows] = predict(model, points[rows])
    return mean, var, cells


def holdout_rmspe(
    models: Models, grid: Grid, coords: npt.ArrayLike, responses: npt.ArrayLike
) -> float:
    """RMSPE of withheld observations, each scored by its cell's model."""
    y = np.asarray(responses, dtype=np.float64).ravel()
    if y.size == 0:
        return math.nan
    mean, _, _ = predict_by_owner(models, grid, coords)
    scored = np.isfinite(mean)
    if not np.all(scored):
        log.warning("%d held-out points fall in cells without a model", int(np.sum(~scored)))
    if not np.any(scored):
        return math.nan
    return float(np.sqrt(np.mean((y[scored] - mean[scored]) ** 2)))


def partition_diagnostics(
    models: Models, partitions: Sequence[PartitionData]
) -> list[dict[str, Any]]:
    """Per-partition count, in-sample RMSPE, and learned hyperparameters."""
    errors = residuals(models, partitions)
    rows: list[dict[str, Any]] = []
    for part in partitions:
        row: dict[str, Any] = {"partition": part.id, "n": part.n}
        model = models.get(part.id)
        if model is not None and part.id in errors:
            ls = model.kernel.lengthscales
            row |= {
                "rmspe": float(np.sqrt(np.mean(errors[part.id] ** 2))),
                "lengthscale_x": float(ls[0]),
                "lengthscale_y": float(ls[-1]),
                "variance": model.kernel.variance,
                "noise_variance": model.kernel.noise_variance,
            }
        rows.append(row)
    return rows


@dataclass
class MetricsReport:
    """Metrics of one trained run."""

    rmspe: float
    boundary_rmsd: float
    probes_used: int
    probes_skipped: int
    holdout_rmspe: float = math.nan
    seconds: float = 0.0
    seconds_per_iteration: float = 0.0
    requests: int = 0
    messages: int = 0
    partitions: list[dict[str, Any]] = field(default_factory=list)

    @classmethod
    def evaluate(
        cls,
        models: Models,
        partitions: Sequence[PartitionData],
        probes: BoundaryProbeSet,
        **extra: Any,
    ) -> Self:
        """Score models on their partitions and probes."""
        diffs, skipped = boundary_differences(models, probes)
        return cls(
            rmspe=rmspe(models, partitions),
            boundary_rmsd=float(np.sqrt(np.mean(diffs**2))) if diffs.size else math.nan,
            probes_used=int(diffs.size),
            probes_skipped=skipped,
            partitions=partition_diagnostics(models, partitions),
            **extra,
        )

    def summary(self) -> dict[str, Any]:
        """Scalar metrics only."""
        data = asdict(self)
        data.pop("partitions")
        return data

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        return cls(**data)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([self.summary()])

    def save(self, path: Path) -> None:
        """Save as JSON (NaN written as null)."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(self.to_dict()), indent=2))

    @classmethod
    def load(cls, path: Path) -> Self:
        data = json.loads(path.read_text())
        for key in ("rmspe", "boundary_rmsd", "holdout_rmspe"):
            if data.get(key) is None:
                data[key] = math.nan
        return cls.from_dict(data)


def _jsonable(value: Any) -> Any:
    """Replace NaN/inf floats with None, recursively.

    >>> _jsonable({"a": float("nan"), "b": [1.5]})
    {'a': None, 'b': [1.5]}
    """
    match value:
        case float() if not math.isfinite(value):
            return None
        case dict():
            return {k: _jsonable(v) for k, v in value.items()}
        case list():
            return [_jsonable(v) for v in value]
    return value
