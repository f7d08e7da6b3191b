"""3D integral volume: O(1) point counts in axis-aligned boxes.

The volume divides an axis-aligned box into ``nx * ny * nz`` uniform cells
and stores, at every grid node ``(a, b, c)``, the number of points whose
cell index is below ``(a, b, c)`` on all three axes. Any box made of whole
cells is then counted with eight lookups and alternating signs.

All three axes accumulate upward from the minimum corner. A "starting
vertex" at a different corner is a reflection of the same structure and
yields identical box counts.

Cells are half-open: a point on a cell's upper face belongs to the next
cell, except on the global upper face where the last cell is closed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from .errors import DegenerateBounds
from .geometry import as_cloud

# Grid coordinates within SNAP_TOL (in cell units) of a node snap onto it,
# so node-aligned queries count exactly despite rounding in (q - lo) / h.
SNAP_TOL = 1e-9


class Mode(enum.Enum):
    ENCLOSING = "enclosing"  # rounds outward: count >= true count
    INNER = "inner"  # rounds inward: count <= true count


def _check_bounds(lo, hi, resolution):
    lo = np.asarray(lo, dtype=np.float64).reshape(3)
    hi = np.asarray(hi, dtype=np.float64).reshape(3)
    res = np.asarray(resolution, dtype=np.int64).reshape(3)
    if np.any(res < 1):
        raise ValueError(f"resolution must be >= 1 per axis, got {tuple(res)}")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(hi - lo <= 0):
        raise DegenerateBounds(f"bounds need positive extent, got lo={lo} hi={hi}")
    return lo, hi, res


def _inside(pts, lo, hi):
    return np.all((pts >= lo) & (pts <= hi), axis=1)


def cell_index(pts, lo, cell, res) -> np.ndarray:
    """Integer cell coordinates of ``pts``, clamped into the grid."""
    idx = np.floor((pts - lo) / cell).astype(np.int64)
    return np.clip(idx, 0, res - 1)


@dataclass(frozen=True, eq=False)
class IntegralVolume:
    lo: np.ndarray
    hi: np.ndarray
    resolution: np.ndarray
    nodes: np.ndarray  # int32, shape resolution + 1
    total_points: int

    @property
    def cell(self) -> np.ndarray:
        return (self.hi - self.lo) / self.resolution

    def count(self, qlo, qhi, mode: Mode = Mode.ENCLOSING):
        """Vectorised :func:`count_in_cuboid` for ``(..., 3)`` corner arrays."""
        qlo = np.asarray(qlo, dtype=np.float64)
        qhi = np.asarray(qhi, dtype=np.float64)
        cell = self.cell
        xlo = (qlo - self.lo) / cell
        xhi = (qhi - self.lo) / cell
        if mode is Mode.ENCLOSING:
            a0 = np.floor(xlo + SNAP_TOL)
            a1 = np.ceil(xhi - SNAP_TOL)
            # a query that is a single plane still touches the cell it lies in
            a1 = np.maximum(a1, a0 + 1)
        else:
            a0 = np.ceil(xlo - SNAP_TOL)
            a1 = np.floor(xhi + SNAP_TOL)
        res = self.resolution
        # clipping before the cast keeps huge or infinite queries in range
        a0 = np.clip(a0, 0, res).astype(np.int64)
        a1 = np.clip(a1, 0, res).astype(np.int64)
        empty = np.any((a1 <= a0) | (qhi < qlo), axis=-1)
        a1 = np.maximum(a1, a0)
        return np.where(empty, 0, _box_sum(self.nodes, a0, a1))


def _box_sum(nodes, a0, a1):
    x0, y0, z0 = a0[..., 0], a0[..., 1], a0[..., 2]
    x1, y1, z1 = a1[..., 0], a1[..., 1], a1[..., 2]
    return (
        nodes[x1, y1, z1]
        - nodes[x0, y1, z1]
        - nodes[x1, y0, z1]
        - nodes[x1, y1, z0]
        + nodes[x0, y0, z1]
        + nodes[x0, y1, z0]
        + nodes[x1, y0, z0]
        - nodes[x0, y0, z0]
    )


@dataclass(frozen=True, eq=False)
class BucketGrid:
    """Points bucketed by the same cells as the matching integral volume.

    Cells are stored CSR style in linear order ``(ix * ny + iy) * nz + iz``:
    cell ``k`` holds ``points[starts[k]:starts[k + 1]]``, whose indices in
    the input cloud are ``index[starts[k]:starts[k + 1]]``.
    """

    lo: np.ndarray
    hi: np.ndarray
    resolution: np.ndarray
    points: np.ndarray
    index: np.ndarray
    starts: np.ndarray

    @property
    def cell(self) -> np.ndarray:
        return (self.hi - self.lo) / self.resolution

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    def cell_slice(self, ix, iy, iz) -> slice:
        nx, ny, nz = self.resolution
        k = (ix * ny + iy) * nz + iz
        return slice(int(self.starts[k]), int(self.starts[k + 1]))


def build(cloud, resolution=(51, 51, 51), bounds=None, outside: str = "clamp"):
    """Build an :class:`IntegralVolume` and its :class:`BucketGrid`.

    ``bounds`` is ``(lo, hi)``; by default the tight bounding box of the
    cloud. Points outside the bounds are either counted in the nearest
    boundary cell (``outside="clamp"``) or dropped (``outside="reject"``).
    The bucket grid never stores out-of-bounds points.
    """
    pts = as_cloud(cloud)
    if bounds is None:
        if len(pts) == 0:
            raise DegenerateBounds("cannot infer bounds of an empty cloud")
        bounds = (pts.min(axis=0), pts.max(axis=0))
    lo, hi, res = _check_bounds(bounds[0], bounds[1], resolution)
    cell = (hi - lo) / res
    inside = _inside(pts, lo, hi)
    if outside == "reject":
        counted = pts[inside]
    elif outside == "clamp":
        counted = pts
    else:
        raise ValueError(f"outside must be 'clamp' or 'reject', got {outside!r}")

    nodes = _node_table(_linear(cell_index(counted, lo, cell, res), res), res)
    iv = IntegralVolume(lo, hi, res, nodes, int(len(counted)))

    kept = np.flatnonzero(inside)
    linear = _linear(cell_index(pts[kept], lo, cell, res), res)
    order = np.argsort(linear, kind="stable")
    starts = _csr_starts(linear, int(np.prod(res)))
    bg = BucketGrid(lo, hi, res, np.ascontiguousarray(pts[kept[order]]), kept[order], starts)
    return iv, bg


def _linear(idx, res):
    return (idx[:, 0] * res[1] + idx[:, 1]) * res[2] + idx[:, 2]


@njit(cache=True)
def _csr_starts(linear, ncell):
    starts = np.zeros(ncell + 1, np.int32)
    for k in linear:
        starts[k + 1] += 1
    for k in range(ncell):
        starts[k + 1] += starts[k]
    return starts


@njit(cache=True)
def _node_table(linear, res):
    """Nodes with ``nodes[a, b, c]`` = points in cells below ``(a, b, c)`` on every axis."""
    nx, ny, nz = res[0], res[1], res[2]
    nodes = np.zeros((nx + 1, ny + 1, nz + 1), np.int32)
    # cell counts go straight into the node array, then are summed in place
    for k in linear:
        nodes[k // (ny * nz) + 1, (k // nz) % ny + 1, k % nz + 1] += 1
    for a in range(1, nx + 1):
        for b in range(1, ny + 1):
            for c in range(1, nz + 1):
                nodes[a, b, c] += (nodes[a, b, c - 1] + nodes[a, b - 1, c] + nodes[a - 1, b, c]
                                   - nodes[a, b - 1, c - 1] - nodes[a - 1, b, c - 1]
                                   - nodes[a - 1, b - 1, c] + nodes[a - 1, b - 1, c - 1])
    return nodes


def count_in_cuboid(iv: IntegralVolume, qlo, qhi, mode: Mode = Mode.ENCLOSING) -> int:
    """Grid-snapped count of points in the box ``[qlo, qhi]``.

    ``ENCLOSING`` counts every cell the box touches, ``INNER`` only cells
    fully inside it. Box corners on grid nodes make both exact. Parts of the
    box outside the volume are clipped away.
    """
    return int(iv.count(qlo, qhi, mode))


def exact_consensus_exists(bg: BucketGrid, center, epsilon: float) -> bool:
    """True iff some stored point is within Chebyshev distance ``epsilon``."""
    c = np.asarray(center, dtype=np.float64)
    cell = bg.cell
    res = bg.resolution
    a0 = np.floor((c - epsilon - bg.lo) / cell).astype(np.int64)
    a1 = np.floor((c + epsilon - bg.lo) / cell).astype(np.int64)
    if np.any(a1 < 0) or np.any(a0 > res - 1):
        return False
    a0 = np.clip(a0, 0, res - 1)
    a1 = np.clip(a1, 0, res - 1)
    for ix in range(a0[0], a1[0] + 1):
        for iy in range(a0[1], a1[1] + 1):
            for iz in range(a0[2], a1[2] + 1):
                members = bg.points[bg.cell_slice(ix, iy, iz)]
                if len(members) and np.any(np.max(np.abs(members - c), axis=1) <= epsilon):
                    return True
    return False


def build_padded(cloud, pad: float, resolution=(51, 51, 51)):
    """:func:`build` over the bounding box of ``cloud`` grown by ``pad`` on every side."""
    pts = as_cloud(cloud)
    if len(pts) == 0:
        raise DegenerateBounds("cannot infer bounds of an empty cloud")
    return build(pts, resolution, (pts.min(axis=0) - pad, pts.max(axis=0) + pad))
