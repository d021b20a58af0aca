"""Tests for psvgp.config module."""

from __future__ import annotations

from pathlib import Path
from tempfile import TemporaryDirectory

import pytest

from psvgp.config import CONFIG_FILENAME, TrainRun, find_config, parse_grid, parse_list
from psvgp.errors import ConfigError


def test_find_config_in_current_dir() -> None:
    """Test finding config in current directory."""
    with TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        config_path = root / CONFIG_FILENAME
        config_path.write_text("m = 3\n")

        found = find_config(root)
        assert found == config_path.resolve()


def test_find_config_in_parent() -> None:
    """Test finding config in parent directory."""
    with TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        config_path = root / CONFIG_FILENAME
        config_path.write_text("m = 3\n")

        subdir = root / "subdir" / "nested"
        subdir.mkdir(parents=True)

        found = find_config(subdir)
        assert found == config_path.resolve()


def test_find_config_not_found() -> None:
    """Test when config is not found."""
    with TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        found = find_config(root)
        assert found is None


def test_defaults_are_valid() -> None:
    """Test the default run passes validation."""
    run = TrainRun().validate()
    assert run.grid == (4, 4)
    assert run.n_partitions == 16
    assert run.delta == 0.0


def test_load_toml() -> None:
    """Test loading a flat TOML table."""
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / CONFIG_FILENAME
        path.write_text('grid = [3, 2]\nm = 7\ndelta = 0.25\ntransport = "zmq"\n')
        run = TrainRun.load(path)
    assert run.grid == (3, 2)
    assert run.m == 7
    assert run.delta == 0.25
    assert run.transport == "zmq"


def test_load_grid_string() -> None:
    """Test the grid may be written as "NX,NY"."""
    assert TrainRun.parse({"grid": "5,6"}).grid == (5, 6)


def test_load_unknown_key() -> None:
    """Test unknown keys are rejected."""
    with pytest.raises(ConfigError, match="unknown config keys: bogus"):
        TrainRun.parse({"bogus": 1})


def test_load_bad_toml() -> None:
    """Test TOML syntax errors become ConfigError."""
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / CONFIG_FILENAME
        path.write_text("m = = 3\n")
        with pytest.raises(ConfigError, match=CONFIG_FILENAME):
            TrainRun.load(path)


def test_save_load_roundtrip() -> None:
    """Test a saved run loads back equal."""
    run = TrainRun(grid=(20, 20), delta=0.125, data="/data/obs.csv", wraparound=True)
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "resolved-config.txt"
        run.save(path)
        assert TrainRun.load(path) == run


def test_override_skips_none() -> None:
    """Test None overrides leave values unchanged."""
    run = TrainRun().override(m=9, delta=None, grid="2,3")
    assert run.m == 9
    assert run.delta == 0.0
    assert run.grid == (2, 3)


def test_validate_collects_problems() -> None:
    """Test every invalid value is reported at once."""
    run = TrainRun(delta=1.5, m=0, adjacency="diagonal")
    with pytest.raises(ConfigError) as info:
        run.validate()
    message = str(info.value)
    assert "delta" in message
    assert "m must be at least 1" in message
    assert "adjacency" in message


def test_validate_procs_exceed_partitions() -> None:
    """Test more workers than partitions is rejected."""
    with pytest.raises(ConfigError, match="procs"):
        TrainRun(grid=(2, 2), procs=5).validate()


def test_validate_negative_seed() -> None:
    """Test seeds must be non-negative."""
    with pytest.raises(ConfigError, match="seed"):
        TrainRun(seed=-1).validate()


def test_parse_grid_bad() -> None:
    """Test malformed grids are rejected."""
    with pytest.raises(ConfigError, match="NX,NY"):
        parse_grid("4")
    with pytest.raises(ConfigError, match="NX,NY"):
        parse_grid("a,b")


def test_parse_list_bad() -> None:
    """Test malformed lists are rejected."""
    assert parse_list("3, 5,7", int) == [3, 5, 7]
    with pytest.raises(ConfigError):
        parse_list("1,x", float)


def test_validate_rejects_string_number() -> None:
    """Test a quoted number in psvgp.toml names the offending key."""
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / CONFIG_FILENAME
        path.write_text('m = "5"\n')
        run = TrainRun.load(path)
    with pytest.raises(ConfigError, match="m must be an integer, got '5'"):
        run.validate()


@pytest.mark.parametrize(
    ("key", "value", "message"),
    [
        ("delta", "0.5", "delta must be a number"),
        ("iterations", 2.5, "iterations must be an integer"),
        ("batch", True, "batch must be an integer"),
        ("wraparound", 1, "wraparound must be a boolean"),
        ("transport", 3, "transport must be a string"),
        ("out", ["a"], "out must be a string"),
    ],
)
def test_validate_types(key: str, value: object, message: str) -> None:
    """Test values of the wrong type are configuration errors."""
    with pytest.raises(ConfigError, match=message):
        TrainRun.parse({key: value}).validate()


def test_validate_accepts_integer_for_float() -> None:
    """Test a whole number is a valid float setting."""
    assert TrainRun.parse({"lr": 1, "delta": 0}).validate().delta == 0


def test_parse_grid_rejects_non_integers() -> None:
    """Test grid entries from TOML must be integers."""
    with pytest.raises(ConfigError, match="NX,NY"):
        TrainRun.parse({"grid": [4.5, 2]})
    with pytest.raises(ConfigError, match="NX,NY"):
        TrainRun.parse({"grid": 4})
