"""Tests for psvgp.data module."""

from __future__ import annotations

from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pytest

from psvgp.config import TrainRun
from psvgp.data import Dataset, export_csv, ingest_csv, load_dataset, synthesize
from psvgp.errors import DataError


def test_from_arrays_scales_to_unit_square() -> None:
    """Test coordinates map to [0, 1]^2 and values are centered."""
    data = Dataset.from_arrays([[10.0, -5.0], [20.0, -3.0], [15.0, -4.0]], [1.0, 2.0, 6.0])
    assert data.coords.min(axis=0).tolist() == [0.0, 0.0]
    assert data.coords.max(axis=0).tolist() == [1.0, 1.0]
    assert data.mean == pytest.approx(3.0)
    assert data.responses == pytest.approx([-2.0, -1.0, 3.0])
    assert data.to_raw_coords(data.coords) == pytest.approx(data.raw_coords)
    assert data.to_raw_values(data.responses) == pytest.approx(data.raw_values)


def test_from_arrays_constant_coordinate() -> None:
    """Test a degenerate axis is not divided by zero."""
    data = Dataset.from_arrays([[1.0, 5.0], [2.0, 5.0]], [0.0, 1.0])
    assert data.coords[:, 1].tolist() == [0.0, 0.0]


def test_from_arrays_rejects_bad_input() -> None:
    """Test malformed arrays raise DataError."""
    with pytest.raises(DataError, match="no observations"):
        Dataset.from_arrays(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(DataError, match="non-finite"):
        Dataset.from_arrays([[0.0, np.nan]], [1.0])
    with pytest.raises(DataError, match=r"\(n, 2\)"):
        Dataset.from_arrays(np.zeros((3, 3)), np.zeros(3))


def test_export_ingest_bitwise() -> None:
    """Test exported observations re-ingest to identical doubles."""
    rng = np.random.default_rng(0)
    coords = rng.uniform(-180, 180, size=(25, 2))
    values = rng.normal(size=25) / 3.0
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "obs.csv"
        export_csv(path, coords, values)
        assert path.read_text().splitlines()[0] == "lon,lat,value"
        data = ingest_csv(path)
    assert np.array_equal(data.raw_coords, coords)
    assert np.array_equal(data.raw_values, values)


def test_ingest_wrong_header() -> None:
    """Test the header must be exactly lon,lat,value."""
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "obs.csv"
        path.write_text("x,y,z\n1,2,3\n")
        with pytest.raises(DataError, match="header must be exactly lon,lat,value"):
            ingest_csv(path)


def test_ingest_malformed_value_reports_line() -> None:
    """Test a non-numeric field is reported with its line number."""
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "obs.csv"
        path.write_text("lon,lat,value\n1,2,3\n4,five,6\n")
        with pytest.raises(DataError, match=r"obs\.csv:3: malformed lat value 'five'"):
            ingest_csv(path)


def test_ingest_missing_value_reports_line() -> None:
    """Test a missing field is reported with its line number."""
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "obs.csv"
        path.write_text("lon,lat,value\n1,2,3\n4,5,6\n7,8,\n")
        with pytest.raises(DataError, match=r"obs\.csv:4: missing"):
            ingest_csv(path)


def test_ingest_empty_and_missing_file() -> None:
    """Test empty and absent files raise DataError."""
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "obs.csv"
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            ingest_csv(path)
        with pytest.raises(DataError, match="not found"):
            ingest_csv(Path(tmpdir) / "missing.csv")
        path.write_text("lon,lat,value\n")
        with pytest.raises(DataError, match="no observations"):
            ingest_csv(path)


def test_holdout_split() -> None:
    """Test the holdout split is seeded, disjoint, and shares the scaling."""
    data = synthesize(TrainRun(synth_size=10))
    train, test = data.holdout_split(0.2, seed=3)
    assert train.n == 80
    assert test.n == 20
    both = np.concatenate([train.raw_values, test.raw_values])
    assert np.array_equal(np.sort(both), np.sort(data.raw_values))
    assert train.mean == test.mean == data.mean
    again, _ = data.holdout_split(0.2, seed=3)
    assert np.array_equal(again.raw_values, train.raw_values)


def test_holdout_split_none() -> None:
    """Test a zero fraction keeps every observation."""
    data = synthesize(TrainRun(synth_size=4))
    train, test = data.holdout_split(0.0, seed=0)
    assert train is data
    assert test.n == 0


def test_synthesize_is_seeded() -> None:
    """Test the benchmark is a seeded lattice draw."""
    run = TrainRun(synth_size=8, data_seed=2)
    first = synthesize(run)
    assert first.n == 64
    assert np.array_equal(first.raw_values, synthesize(run).raw_values)
    other = synthesize(run.override(data_seed=3))
    assert not np.array_equal(first.raw_values, other.raw_values)


def test_load_dataset_relative_path() -> None:
    """Test a relative data path resolves against the base directory."""
    with TemporaryDirectory() as tmpdir:
        base = Path(tmpdir)
        export_csv(base / "obs.csv", [[0.0, 0.0], [1.0, 2.0]], [0.5, 1.5])
        data = load_dataset(TrainRun(data="obs.csv"), base)
    assert data.n == 2
