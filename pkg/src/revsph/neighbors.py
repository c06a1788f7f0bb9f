"""Uniform-grid cell lists.

Two views of the same search:

* :func:`build` / :func:`neighbors_of` - a :class:`CellGrid` of buckets keyed
  by integer cell coordinates, queried one particle at a time.
* :func:`neighbor_table` - the CSR table used by the solver, built for all
  particles at once by the selected backend. Row ``a`` lists every ``b``
  with ``|r_a - r_b| < radius``, *including* ``a`` itself, in ascending
  index order.

Particles are never reordered; lists depend only on indices and positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import get_backend


@dataclass
class CellGrid:
    cell_size: float
    lower: tuple[float, float]
    upper: tuple[float, float]
    positions: np.ndarray
    buckets: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def cell_of(self, p) -> tuple[int, int]:
        return (int(math.floor((p[0] - self.lower[0]) / self.cell_size)),
                int(math.floor((p[1] - self.lower[1]) / self.cell_size)))


def build(positions, cell_size: float) -> CellGrid:
    if not cell_size > 0:
        raise ValueError("cell_size must be positive")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(pos)):
        bad = int(np.argwhere(~np.isfinite(pos))[0][0])
        raise FloatingPointError(f"non-finite position for particle {bad}")
    if len(pos) == 0:
        return CellGrid(cell_size, (0.0, 0.0), (0.0, 0.0), pos)
    lower = tuple(pos.min(axis=0))
    upper = tuple(pos.max(axis=0))
    grid = CellGrid(float(cell_size), lower, upper, pos)
    cells = np.floor((pos - np.asarray(lower)) / cell_size).astype(np.int64)
    order = np.lexsort((np.arange(len(pos)), cells[:, 1], cells[:, 0]))
    keys = cells[order]
    split = np.flatnonzero(np.any(np.diff(keys, axis=0) != 0, axis=1)) + 1
    for chunk in np.split(order, split):
        cx, cy = cells[chunk[0]]
        grid.buckets[(int(cx), int(cy))] = np.sort(chunk)
    return grid


def neighbors_of(g: CellGrid, a: int, radius: float) -> np.ndarray:
    """Indices ``b != a`` with ``|r_a - r_b| < radius``, ascending."""
    if radius > g.cell_size:
        raise ValueError(f"query radius {radius} exceeds cell size {g.cell_size}")
    p = g.positions[a]
    cx, cy = g.cell_of(p)
    found = []
    for ox in (-1, 0, 1):
        for oy in (-1, 0, 1):
            bucket = g.buckets.get((cx + ox, cy + oy))
            if bucket is None:
                continue
            d = g.positions[bucket] - p
            r = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
            found.append(bucket[(r < radius) & (bucket != a)])
    if not found:
        return np.zeros(0, dtype=np.int64)
    return np.sort(np.concatenate(found)).astype(np.int64)


@dataclass(frozen=True)
class NeighborTable:
    offsets: np.ndarray
    indices: np.ndarray
    radius: float

    @property
    def n(self) -> int:
        return len(self.offsets) - 1

    def row(self, a: int) -> np.ndarray:
        return self.indices[self.offsets[a]:self.offsets[a + 1]]

    def neighbors(self, a: int) -> np.ndarray:
        row = self.row(a)
        return row[row != a]


def neighbor_table(positions, radius: float, workers: int = 1, backend=None) -> NeighborTable:
    be = backend if backend is not None and not isinstance(backend, str) else get_backend(backend)
    pos = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 2)
    offsets, idx = be.neighbor_table(pos, float(radius), int(workers))
    return NeighborTable(np.asarray(offsets), np.asarray(idx), float(radius))
