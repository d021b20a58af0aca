"""Shared fixtures: a small synthetic problem that trains in well under a second."""

from __future__ import annotations

import os

import pytest

from psvgp.config import TrainRun
from psvgp.data import Dataset, synthesize
from psvgp.partition import PartitionData, build_grid_partition


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    """Skip `slow` tests unless PSVGP_SLOW=1."""
    if os.environ.get("PSVGP_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set PSVGP_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def small_run() -> TrainRun:
    return TrainRun(
        synth_size=12,
        grid=(2, 2),
        m=3,
        batch=8,
        iterations=5,
        probes_per_edge=5,
        watchdog=30.0,
    )


@pytest.fixture
def small_dataset(small_run: TrainRun) -> Dataset:
    return synthesize(small_run)


@pytest.fixture
def small_partitions(small_dataset: Dataset, small_run: TrainRun) -> list[PartitionData]:
    nx, ny = small_run.grid
    return build_grid_partition(small_dataset.coords, small_dataset.responses, nx, ny)
