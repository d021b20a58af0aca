"""Observation datasets: CSV ingestion/export and the synthetic benchmark."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Self

import numpy as np
import numpy.typing as npt
import pandas as pd
from pandas.api.types import is_numeric_dtype

from psvgp.config import TrainRun
from psvgp.errors import DataError
from psvgp.gp import Array, KernelParams, sample_grf

log = logging.getLogger(__name__)

COLUMNS = ["lon", "lat", "value"]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations as ingested, plus the unit-square, zero-mean working copy.

    `coords = (raw_coords - offset) / scale` and `responses = raw_values - mean`.
    """

    raw_coords: Array
    raw_values: Array
    coords: Array
    responses: Array
    offset: Array
    scale: Array
    mean: float

    @classmethod
    def from_arrays(cls, raw_coords: npt.ArrayLike, raw_values: npt.ArrayLike) -> Self:
        """Scale coordinates to [0, 1]^2 and center values."""
        xy = np.asarray(raw_coords, dtype=np.float64)
        values = np.asarray(raw_values, dtype=np.float64).ravel()
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise DataError(f"coordinates must be (n, 2), got {xy.shape}")
        if xy.shape[0] != values.shape[0]:
            raise DataError(f"got {xy.shape[0]} coordinates but {values.shape[0]} values")
        if values.shape[0] == 0:
            raise DataError("dataset has no observations")
        if not (np.all(np.isfinite(xy)) and np.all(np.isfinite(values))):
            raise DataError("dataset contains non-finite values")

        offset = xy.min(axis=0)
        span = xy.max(axis=0) - offset
        scale = np.where(span > 0, span, 1.0)
        mean = float(np.mean(values))
        return cls(
            raw_coords=xy,
            raw_values=values,
            coords=(xy - offset) / scale,
            responses=values - mean,
            offset=offset,
            scale=scale,
            mean=mean,
        )

    @property
    def n(self) -> int:
        return int(self.raw_values.shape[0])

    def to_raw_coords(self, coords: npt.ArrayLike) -> Array:
        return np.asarray(coords, dtype=np.float64) * self.scale + self.offset

    def to_raw_values(self, values: npt.ArrayLike) -> Array:
        return np.asarray(values, dtype=np.float64) + self.mean

    def take(self, indices: npt.ArrayLike) -> Dataset:
        """Subset sharing this dataset's scaling and centering."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            raw_coords=self.raw_coords[idx],
            raw_values=self.raw_values[idx],
            coords=self.coords[idx],
            responses=self.responses[idx],
            offset=self.offset,
            scale=self.scale,
            mean=self.mean,
        )

    def holdout_split(self, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
        """Seeded (train, test) split withholding `fraction` of observations."""
        if fraction <= 0:
            return self, self.take(np.arange(0))
        rng = np.random.default_rng(seed)
        n_test = int(round(fraction * self.n))
        order = rng.permutation(self.n)
        test = np.sort(order[:n_test])
        train = np.sort(order[n_test:])
        return self.take(train), self.take(test)


def _line_error(path: Path, row: int, message: str) -> DataError:
    # header is line 1
    return DataError(f"{path}:{row + 2}: {message}")


def ingest_csv(path: Path) -> Dataset:
    """Read a `lon,lat,value` CSV into a dataset."""
    try:
        frame = pd.read_csv(
            path, float_precision="round_trip", skip_blank_lines=False, skipinitialspace=True
        )
    except FileNotFoundError as e:
        raise DataError(f"data file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path}: file is empty") from e
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: malformed row: {e}") from e

    if list(frame.columns) != COLUMNS:
        raise DataError(
            f"{path}: header must be exactly {','.join(COLUMNS)}, "
            f"got {','.join(str(c) for c in frame.columns)}"
        )
    if frame.empty:
        raise DataError(f"{path}: no observations")

    for column in COLUMNS:
        values = frame[column]
        if not is_numeric_dtype(values):
            bad = pd.to_numeric(values, errors="coerce").isna() & values.notna()
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise _line_error(path, row, f"malformed {column} value {values.iloc[row]!r}")

    table = frame.to_numpy(dtype=np.float64)
    bad_rows = np.flatnonzero(~np.isfinite(table).all(axis=1))
    if bad_rows.size:
        raise _line_error(path, int(bad_rows[0]), "missing or non-finite value")

    log.info("ingested %d observations from %s", table.shape[0], path)
    return Dataset.from_arrays(table[:, :2], table[:, 2])


def export_csv(path: Path, coords: npt.ArrayLike, values: npt.ArrayLike) -> None:
    """Write raw observations as `lon,lat,value` (re-ingests bitwise)."""
    xy = np.asarray(coords, dtype=np.float64)
    frame = pd.DataFrame(
        {"lon": xy[:, 0], "lat": xy[:, 1], "value": np.asarray(values, dtype=np.float64)}
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)


def benchmark_grid(size: int) -> Array:
    """size x size lattice on the unit square, x varying fastest.

    >>> benchmark_grid(2).tolist()
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    """
    ticks = np.linspace(0.0, 1.0, size)
    xs, ys = np.meshgrid(ticks, ticks)
    return np.column_stack([xs.ravel(), ys.ravel()])


def synthesize(run: TrainRun) -> Dataset:
    """The standard benchmark: one Gaussian random field draw on a lattice."""
    points = benchmark_grid(run.synth_size)
    kernel = KernelParams.from_values(
        [run.synth_lengthscale, run.synth_lengthscale],
        run.synth_variance,
        run.synth_precision,
    )
    values = sample_grf(points, kernel, run.data_seed)
    return Dataset.from_arrays(points, values)


def load_dataset(run: TrainRun, base: Path | None = None) -> Dataset:
    """Synthesize or ingest the data a run names."""
    if run.data == "synthetic":
        return synthesize(run)
    path = Path(run.data)
    if base is not None and not path.is_absolute():
        path = base / path
    return ingest_csv(path)
