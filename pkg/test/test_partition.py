"""Tests for psvgp.partition module."""

from __future__ import annotations

from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pandas as pd
import pytest

from psvgp.errors import ConfigError
from psvgp.partition import (
    Box,
    Grid,
    PartitionData,
    boundary_probes,
    build_grid_partition,
    count_summary,
    neighborhoods,
    write_manifest,
)


def _lattice(size: int) -> np.ndarray:
    ticks = np.linspace(0.0, 1.0, size)
    xs, ys = np.meshgrid(ticks, ticks)
    return np.column_stack([xs.ravel(), ys.ravel()])


def _cells(nx: int, ny: int) -> list[PartitionData]:
    coords = _lattice(12)
    return build_grid_partition(coords, np.zeros(len(coords)), nx, ny)


def test_grid_locate_clamps_edges() -> None:
    """Test points on the upper edges land in the last cells."""
    grid = Grid.over([[0.0, 0.0], [1.0, 1.0]], 4, 2)
    cells = grid.locate([[0.0, 0.0], [1.0, 1.0], [0.26, 0.0], [0.25, 0.5], [5.0, -1.0]])
    assert cells.tolist() == [0, 7, 1, 5, 3]


def test_grid_position_roundtrip() -> None:
    """Test cell ids are row-major."""
    grid = Grid.over([[0.0, 0.0], [1.0, 1.0]], 3, 2)
    assert [grid.position(c) for c in range(6)] == [
        (0, 0),
        (1, 0),
        (2, 0),
        (0, 1),
        (1, 1),
        (2, 1),
    ]


def test_grid_rejects_empty_dimensions() -> None:
    """Test non-positive grid dimensions are rejected."""
    with pytest.raises(ConfigError, match="positive"):
        Grid.over([[0.0, 0.0]], 0, 2)


def test_build_grid_partition_covers_every_point() -> None:
    """Test each point lands in exactly one cell, inside its box."""
    coords = _lattice(12)
    parts = build_grid_partition(coords, np.arange(len(coords), dtype=float), 3, 3)
    assert [p.id for p in parts] == list(range(9))
    assert sum(p.n for p in parts) == len(coords)
    values = np.sort(np.concatenate([p.responses for p in parts]))
    assert np.array_equal(values, np.arange(len(coords), dtype=float))
    for part in parts:
        assert np.all(part.bbox.contains(part.coords))


def test_build_grid_partition_allows_empty_cells() -> None:
    """Test cells without points are kept with no observations."""
    coords = np.array([[0.0, 0.0], [0.1, 0.1], [1.0, 1.0]])
    parts = build_grid_partition(coords, np.zeros(3), 3, 3, Box(0.0, 0.0, 1.0, 1.0))
    assert [p.n for p in parts] == [2, 0, 0, 0, 0, 0, 0, 0, 1]
    assert parts[4].coords.shape == (0, 2)


def test_build_grid_partition_rejects_3d() -> None:
    """Test grid partitioning needs 2-d coordinates."""
    with pytest.raises(ConfigError, match="2-d"):
        build_grid_partition(np.zeros((4, 3)), np.zeros(4), 2, 2)


def test_neighborhoods_edge() -> None:
    """Test edge adjacency on a 3x3 grid."""
    graph = neighborhoods(_cells(3, 3))
    assert graph.neighbors(4) == (1, 3, 5, 7)
    assert graph.neighbors(0) == (1, 3)
    assert graph.neighbors(8) == (5, 7)
    assert graph.directed_edges == 24
    assert len(graph.pairs()) == 12


def test_neighborhoods_corner() -> None:
    """Test corner adjacency adds the diagonals."""
    graph = neighborhoods(_cells(3, 3), "corner")
    assert graph.neighbors(4) == (0, 1, 2, 3, 5, 6, 7, 8)
    assert graph.neighbors(0) == (1, 3, 4)


def test_neighborhoods_symmetric() -> None:
    """Test adjacency is symmetric and excludes self."""
    for rule in ("edge", "corner"):
        for wrap in (False, True):
            graph = neighborhoods(_cells(4, 3), rule, wrap)
            for j, nbrs in graph.adjacency.items():
                assert j not in nbrs
                for k in nbrs:
                    assert j in graph.neighbors(k)


def test_neighborhoods_wraparound() -> None:
    """Test the x seam joins the first and last columns."""
    graph = neighborhoods(_cells(4, 2), wraparound=True)
    assert graph.neighbors(0) == (1, 3, 4)
    assert graph.neighbors(3) == (0, 2, 7)
    # two columns: the seam neighbor is already the direct neighbor
    assert neighborhoods(_cells(2, 2), wraparound=True).neighbors(0) == (1, 2)


def test_neighborhoods_unknown_rule() -> None:
    """Test unknown adjacency rules are rejected."""
    with pytest.raises(ConfigError, match="adjacency"):
        neighborhoods(_cells(2, 2), "hex")  # type: ignore[arg-type]


def test_neighborhoods_counts() -> None:
    """Test the graph carries observation counts."""
    parts = _cells(2, 2)
    graph = neighborhoods(parts)
    assert graph.counts == {p.id: p.n for p in parts}
    assert graph.count(99) == 0


def test_boundary_probes_on_shared_edges() -> None:
    """Test probes sit on the edge both partitions share."""
    parts = _cells(2, 2)
    probes = boundary_probes(parts, 5)
    assert len(probes) == 4 * 5
    by_id = {p.id: p for p in parts}
    for probe in probes.probes:
        assert probe.a < probe.b
        assert np.array_equal(probe.coord, probe.coord_b)
        assert by_id[probe.a].bbox.contains(probe.coord)[0]
        assert by_id[probe.b].bbox.contains(probe.coord)[0]


def test_boundary_probes_seam() -> None:
    """Test seam probes are seen at x=min from one side and x=max from the other."""
    parts = _cells(4, 1)
    probes = boundary_probes(parts, 3, wraparound=True)
    assert len(probes) == 4 * 3
    seam = [p for p in probes.probes if (p.a, p.b) == (0, 3)]
    assert len(seam) == 3
    side_a = np.array([p.coord for p in seam])
    side_b = np.array([p.coord_b for p in seam])
    assert np.all(side_a[:, 0] == 0.0)
    assert np.all(side_b[:, 0] == 1.0)
    assert np.array_equal(side_a[:, 1], side_b[:, 1])


def test_boundary_probes_single_cell() -> None:
    """Test a single partition has no shared edges."""
    probes = boundary_probes(_cells(1, 1), 23)
    assert len(probes) == 0
    side_a, side_b = probes.coords()
    assert side_a.shape == side_b.shape == (0, 2)


def test_boundary_probes_invalid_count() -> None:
    """Test at least one probe per segment is required."""
    with pytest.raises(ConfigError, match="per_segment"):
        boundary_probes(_cells(2, 2), 0)


def test_count_summary() -> None:
    """Test observation-count statistics."""
    coords = np.array([[0.0, 0.0], [0.1, 0.1], [1.0, 1.0]])
    parts = build_grid_partition(coords, np.zeros(3), 2, 2)
    summary = count_summary(parts)
    assert summary["partitions"] == 4
    assert summary["empty"] == 2
    assert summary["max"] == 2
    assert summary["total"] == 3


def test_write_manifest() -> None:
    """Test the partition manifest CSV."""
    parts = _cells(2, 2)
    with TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "partitions.csv"
        write_manifest(path, parts)
        frame = pd.read_csv(path)
    assert list(frame.columns) == ["partition", "ix", "iy", "xmin", "ymin", "xmax", "ymax", "count"]
    assert frame["count"].sum() == 144
    assert frame.loc[3, "xmax"] == 1.0


def _share_edge(a: Box, b: Box) -> bool:
    overlap_x = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    overlap_y = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    return (overlap_x == 0 and overlap_y > 0) or (overlap_y == 0 and overlap_x > 0)


def test_neighborhoods_large_grid_edge_count() -> None:
    """Test a 20x20 grid against a pairwise bounding-box check."""
    parts = _cells(20, 20)
    graph = neighborhoods(parts)
    assert graph.directed_edges == 2 * (2 * 20 * 20 - 20 - 20) == 1520
    brute = sorted(
        (a.id, b.id)
        for a in parts
        for b in parts
        if a.id < b.id and _share_edge(a.bbox, b.bbox)
    )
    assert graph.pairs() == brute
    interior = graph.neighbors(Grid.over([[0.0, 0.0], [1.0, 1.0]], 20, 20).cell_id(7, 9))
    assert len(interior) == 4


def test_boundary_probes_large_grid() -> None:
    """Test 23 probes on each of the 760 shared edges of a 20x20 grid."""
    probes = boundary_probes(_cells(20, 20), 23)
    assert len(probes) == 23 * 760 == 17_480


def test_boundary_probes_two_cells_fractions() -> None:
    """Test probes sit at 1/6, 3/6, 5/6 along a single shared edge."""
    parts = build_grid_partition(_lattice(12), np.zeros(144), 2, 1)
    side_a, _ = boundary_probes(parts, 3).coords()
    assert side_a[:, 0] == pytest.approx([0.5, 0.5, 0.5])
    assert side_a[:, 1] == pytest.approx([1 / 6, 3 / 6, 5 / 6])
