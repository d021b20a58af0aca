"""Grid partitions, neighborhood sets, and boundary probes."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Self

import numpy as np
import numpy.typing as npt
import pandas as pd

from psvgp.errors import ConfigError
from psvgp.gp import Array

AdjacencyRule = Literal["edge", "corner"]


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, points: npt.ArrayLike, tol: float = 0.0) -> npt.NDArray[np.bool_]:
        """Which points lie inside (within `tol`)."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return (
            (p[:, 0] >= self.xmin - tol)
            & (p[:, 0] <= self.xmax + tol)
            & (p[:, 1] >= self.ymin - tol)
            & (p[:, 1] <= self.ymax + tol)
        )


@dataclass(frozen=True, eq=False)
class Grid:
    """Equal-width nx by ny cells over a bounding box, ids in row-major order."""

    xedges: Array
    yedges: Array

    @classmethod
    def over(
        cls, coords: npt.ArrayLike, nx: int, ny: int, bounds: Box | None = None
    ) -> Self:
        """Grid tiling `bounds`, or the bounding box of `coords`."""
        if nx < 1 or ny < 1:
            raise ConfigError(f"grid dimensions must be positive, got {nx}x{ny}")
        if bounds is None:
            pts = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
            if pts.shape[0] == 0:
                raise ConfigError("cannot build a grid over no points")
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            bounds = Box(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
        return cls(
            xedges=np.linspace(bounds.xmin, bounds.xmax, nx + 1),
            yedges=np.linspace(bounds.ymin, bounds.ymax, ny + 1),
        )

    @property
    def nx(self) -> int:
        return int(self.xedges.shape[0] - 1)

    @property
    def ny(self) -> int:
        return int(self.yedges.shape[0] - 1)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def bounds(self) -> Box:
        return Box(
            float(self.xedges[0]),
            float(self.yedges[0]),
            float(self.xedges[-1]),
            float(self.yedges[-1]),
        )

    def cell_id(self, ix: int, iy: int) -> int:
        """Row-major id of a cell.

        >>> Grid.over([[0, 0], [1, 1]], 3, 2).cell_id(2, 1)
        5
        """
        return iy * self.nx + ix

    def position(self, cell: int) -> tuple[int, int]:
        """(ix, iy) of a cell id."""
        return cell % self.nx, cell // self.nx

    def cell_box(self, ix: int, iy: int) -> Box:
        return Box(
            float(self.xedges[ix]),
            float(self.yedges[iy]),
            float(self.xedges[ix + 1]),
            float(self.yedges[iy + 1]),
        )

    def locate(self, coords: npt.ArrayLike) -> npt.NDArray[np.int64]:
        """Cell id for each point; points outside are clamped to edge cells."""
        pts = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        ix = np.clip(np.searchsorted(self.xedges, pts[:, 0], side="right") - 1, 0, self.nx - 1)
        iy = np.clip(np.searchsorted(self.yedges, pts[:, 1], side="right") - 1, 0, self.ny - 1)
        return (iy * self.nx + ix).astype(np.int64)


@dataclass(frozen=True, eq=False)
class PartitionData:
    """Observations owned by one grid cell."""

    id: int
    ix: int
    iy: int
    coords: Array
    responses: Array
    bbox: Box

    @property
    def n(self) -> int:
        return int(self.responses.shape[0])


def build_grid_partition(
    coords: npt.ArrayLike,
    responses: npt.ArrayLike,
    nx: int,
    ny: int,
    bounds: Box | None = None,
) -> list[PartitionData]:
    """Split points into nx*ny equal-width cells (empty cells allowed)."""
    pts = np.asarray(coords, dtype=np.float64)
    y = np.asarray(responses, dtype=np.float64).ravel()
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ConfigError(f"grid partitioning needs 2-d coordinates, got {pts.shape}")
    if pts.shape[0] != y.shape[0]:
        raise ConfigError(f"got {pts.shape[0]} points but {y.shape[0]} responses")

    grid = Grid.over(pts, nx, ny, bounds)
    return partition_on(grid, pts, y)


def partition_on(grid: Grid, coords: Array, responses: Array) -> list[PartitionData]:
    """Assign points to the cells of an existing grid."""
    cells = grid.locate(coords)
    parts = []
    for cell in range(grid.size):
        ix, iy = grid.position(cell)
        mask = cells == cell
        parts.append(
            PartitionData(
                id=cell,
                ix=ix,
                iy=iy,
                coords=coords[mask],
                responses=responses[mask],
                bbox=grid.cell_box(ix, iy),
            )
        )
    return parts


@dataclass(frozen=True)
class NeighborGraph:
    """Partition adjacency (self excluded) and observation counts."""

    adjacency: dict[int, tuple[int, ...]]
    counts: dict[int, int]
    rule: AdjacencyRule = "edge"
    wraparound: bool = False

    def neighbors(self, j: int) -> tuple[int, ...]:
        return self.adjacency.get(j, ())

    def count(self, j: int) -> int:
        return self.counts.get(j, 0)

    def pairs(self) -> list[tuple[int, int]]:
        """Unordered adjacent pairs (a < b), sorted."""
        return sorted((a, b) for a, nbrs in self.adjacency.items() for b in nbrs if a < b)

    @property
    def directed_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.adjacency.values())


def _offsets(rule: AdjacencyRule) -> list[tuple[int, int]]:
    if rule == "edge":
        return [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if rule == "corner":
        return [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]
    raise ConfigError(f"unknown adjacency rule: {rule!r}")


def _grid_shape(partitions: Iterable[PartitionData]) -> tuple[int, int]:
    parts = list(partitions)
    return max(p.ix for p in parts) + 1, max(p.iy for p in parts) + 1


def neighborhoods(
    partitions: Sequence[PartitionData],
    rule: AdjacencyRule = "edge",
    wraparound: bool = False,
) -> NeighborGraph:
    """Neighbor sets of grid partitions (cells sharing a boundary)."""
    offsets = _offsets(rule)
    if not partitions:
        return NeighborGraph({}, {}, rule, wraparound)
    nx, ny = _grid_shape(partitions)
    by_pos = {(p.ix, p.iy): p.id for p in partitions}

    adjacency: dict[int, tuple[int, ...]] = {}
    for p in partitions:
        found: set[int] = set()
        for dx, dy in offsets:
            qx, qy = p.ix + dx, p.iy + dy
            if wraparound:
                qx %= nx
            other = by_pos.get((qx, qy))
            if other is not None and other != p.id:
                found.add(other)
        adjacency[p.id] = tuple(sorted(found))

    counts = {p.id: p.n for p in partitions}
    return NeighborGraph(dict(sorted(adjacency.items())), dict(sorted(counts.items())), rule, wraparound)


@dataclass(frozen=True, eq=False)
class BoundaryProbe:
    """A point on the boundary shared by partitions `a` and `b` (a < b).

    `coord_b` is the same location in b's frame; it differs from `coord`
    only across the wraparound seam.
    """

    coord: Array
    a: int
    b: int
    coord_b: Array


@dataclass(frozen=True)
class BoundaryProbeSet:
    """Probes on every shared edge."""

    probes: tuple[BoundaryProbe, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.probes)

    def coords(self) -> tuple[Array, Array]:
        """Probe coordinates as seen from side a and side b."""
        if not self.probes:
            return np.zeros((0, 2)), np.zeros((0, 2))
        return (
            np.array([p.coord for p in self.probes]),
            np.array([p.coord_b for p in self.probes]),
        )


def _fractions(per_segment: int) -> Array:
    """Equal spacing along a segment.

    >>> _fractions(3).tolist()
    [0.16666666666666666, 0.5, 0.8333333333333334]
    """
    return (np.arange(per_segment) + 0.5) / per_segment


def segment_probes(pa: PartitionData, pb: PartitionData, per_segment: int, nx: int) -> list[BoundaryProbe]:
    """Probes on the edge shared by two edge-adjacent cells (empty otherwise)."""
    a, b = (pa, pb) if pa.id < pb.id else (pb, pa)
    t = _fractions(per_segment)
    dx, dy = b.ix - a.ix, b.iy - a.iy

    if dy == 0 and abs(dx) == nx - 1 and nx > 2:
        # seam: a sits in column 0, b in column nx - 1
        ys = a.bbox.ymin + t * (a.bbox.ymax - a.bbox.ymin)
        side_a = np.column_stack([np.full_like(ys, a.bbox.xmin), ys])
        side_b = np.column_stack([np.full_like(ys, b.bbox.xmax), ys])
        return [BoundaryProbe(ca, a.id, b.id, cb) for ca, cb in zip(side_a, side_b)]

    if dy == 0 and abs(dx) == 1:
        x = a.bbox.xmax if dx == 1 else a.bbox.xmin
        lo, hi = max(a.bbox.ymin, b.bbox.ymin), min(a.bbox.ymax, b.bbox.ymax)
        pts = np.column_stack([np.full(per_segment, x), lo + t * (hi - lo)])
    elif dx == 0 and abs(dy) == 1:
        y = a.bbox.ymax if dy == 1 else a.bbox.ymin
        lo, hi = max(a.bbox.xmin, b.bbox.xmin), min(a.bbox.xmax, b.bbox.xmax)
        pts = np.column_stack([lo + t * (hi - lo), np.full(per_segment, y)])
    else:
        return []
    return [BoundaryProbe(p, a.id, b.id, p.copy()) for p in pts]


def boundary_probes(
    partitions: Sequence[PartitionData],
    per_segment: int,
    wraparound: bool = False,
) -> BoundaryProbeSet:
    """Equally spaced probes on every edge shared by two partitions."""
    if per_segment < 1:
        raise ConfigError(f"per_segment must be at least 1, got {per_segment}")
    if not partitions:
        return BoundaryProbeSet()
    graph = neighborhoods(partitions, "edge", wraparound)
    nx, _ = _grid_shape(partitions)
    by_id = {p.id: p for p in partitions}
    probes: list[BoundaryProbe] = []
    for a, b in graph.pairs():
        probes.extend(segment_probes(by_id[a], by_id[b], per_segment, nx))
    return BoundaryProbeSet(tuple(probes))


def count_summary(partitions: Sequence[PartitionData]) -> dict[str, float]:
    """Observation-count statistics across partitions."""
    counts = np.array([p.n for p in partitions], dtype=np.float64)
    if counts.size == 0:
        return {"partitions": 0, "empty": 0, "min": 0, "median": 0, "max": 0, "total": 0}
    return {
        "partitions": int(counts.size),
        "empty": int(np.sum(counts == 0)),
        "min": float(counts.min()),
        "median": float(np.median(counts)),
        "max": float(counts.max()),
        "total": float(counts.sum()),
    }


def manifest(partitions: Sequence[PartitionData]) -> pd.DataFrame:
    """Partition layout table: id, grid position, bounding box, count."""
    return pd.DataFrame(
        {
            "partition": [p.id for p in partitions],
            "ix": [p.ix for p in partitions],
            "iy": [p.iy for p in partitions],
            "xmin": [p.bbox.xmin for p in partitions],
            "ymin": [p.bbox.ymin for p in partitions],
            "xmax": [p.bbox.xmax for p in partitions],
            "ymax": [p.bbox.ymax for p in partitions],
            "count": [p.n for p in partitions],
        }
    )


def write_manifest(path: Path, partitions: Sequence[PartitionData]) -> None:
    """Write the partition layout as CSV."""
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest(partitions).to_csv(path, index=False)
