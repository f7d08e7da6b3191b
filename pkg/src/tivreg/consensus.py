"""Batched consensus counting shared by the rotation and translation searches.

The hot loop of both searches asks, for thousands of query points, whether
some fixed point lies in the axis-aligned cube of a given half width around
it. Queries are first screened with the integral volume (eight lookups);
survivors are answered exactly by scanning the bucket-grid cells the cube
overlaps.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .integral_volume import SNAP_TOL, BucketGrid, IntegralVolume

# Outward padding of screen and scan ranges. It dominates both rounding in
# (q - lo) / h and the volume's snap tolerance, so neither step can drop a
# point that the exact <= test would accept.
PAD_REL = 1e-7
PAD_ABS = 1e-12


@njit(cache=True, inline="always")
def _node_range(x, r, lo, cell, n):
    """Enclosing node range ``[a0, a1)`` of ``[x - r, x + r]`` on one axis."""
    pad = (abs(x) + abs(lo) + r) * PAD_REL + PAD_ABS + 2.0 * SNAP_TOL * cell
    a0 = np.floor((x - r - pad - lo) / cell + SNAP_TOL)
    a1 = np.ceil((x + r + pad - lo) / cell - SNAP_TOL)
    if a1 < a0 + 1:
        a1 = a0 + 1
    a0 = min(max(a0, 0.0), float(n))
    a1 = min(max(a1, 0.0), float(n))
    return np.int64(a0), np.int64(a1)


@njit(cache=True)
def _screen_count(q, r, lo, cell, res, nodes):
    x0, x1 = _node_range(q[0], r, lo[0], cell[0], res[0])
    y0, y1 = _node_range(q[1], r, lo[1], cell[1], res[1])
    z0, z1 = _node_range(q[2], r, lo[2], cell[2], res[2])
    if x1 <= x0 or y1 <= y0 or z1 <= z0:
        return 0
    return (nodes[x1, y1, z1] - nodes[x0, y1, z1] - nodes[x1, y0, z1] - nodes[x1, y1, z0]
            + nodes[x0, y0, z1] + nodes[x0, y1, z0] + nodes[x1, y0, z0] - nodes[x0, y0, z0])


@njit(cache=True)
def _exists(q, r, r2, mnorm, nslack, lo, cell, res, spts, snorms, starts):
    """True iff a stored point p has max|p - q| <= r, |p - q|_2 <= r2 and
    ||p| - mnorm| <= nslack. Infinite ``r2`` or ``nslack`` disables a test."""
    # the enclosing node range [a0, a1) is exactly the cells to scan
    x0, x1 = _node_range(q[0], r, lo[0], cell[0], res[0])
    y0, y1 = _node_range(q[1], r, lo[1], cell[1], res[1])
    z0, z1 = _node_range(q[2], r, lo[2], cell[2], res[2])
    if x1 <= x0 or y1 <= y0 or z1 <= z0:
        return False
    ny, nz = res[1], res[2]
    qx, qy, qz = q[0], q[1], q[2]
    rr = r2 * r2
    for ix in range(x0, x1):
        for iy in range(y0, y1):
            # cells along z are contiguous in the CSR layout
            base = (ix * ny + iy) * nz
            for j in range(starts[base + z0], starts[base + z1]):
                dx = abs(spts[j, 0] - qx)
                dy = abs(spts[j, 1] - qy)
                dz = abs(spts[j, 2] - qz)
                if (dx <= r and dy <= r and dz <= r and dx * dx + dy * dy + dz * dz <= rr
                        and abs(snorms[j] - mnorm) <= nslack):
                    return True
    return False


@njit(cache=True)
def _counts(pts, radius, radius2, mnorms, nslack, eps, lo, cell, res, nodes, spts, snorms,
            starts, exact, use_screen, floor):
    K, M = pts.shape[0], pts.shape[1]
    ub = np.zeros(K, np.int64)
    lb = np.full(K, -1, np.int64)
    hit = np.empty(M, np.bool_)
    inf = np.inf
    for k in range(K):
        misses = 0
        for i in range(M):
            q = pts[k, i]
            r = radius[i]
            hit[i] = False
            if use_screen and _screen_count(q, r, lo, cell, res, nodes) == 0:
                pass
            elif not exact or _exists(q, r, radius2[i], mnorms[i], nslack, lo, cell, res,
                                      spts, snorms, starts):
                hit[i] = True
            if not hit[i]:
                misses += 1
                if M - misses <= floor:
                    break
        ub[k] = M - misses
        if ub[k] <= floor:
            continue
        n = 0
        for i in range(M):
            if hit[i] and _exists(pts[k, i], eps, inf, 0.0, inf, lo, cell, res,
                                  spts, snorms, starts):
                n += 1
        lb[k] = n
    return ub, lb


def bound_counts(pts, radius, iv: IntegralVolume, bg: BucketGrid, epsilon: float,
                 exact: bool = True, floor: int = -1, radius_l2=None, norms=None,
                 norm_slack: float = np.inf):
    """Per-cube upper-bound and center counts.

    ``pts`` is ``(K, M, 3)``: ``M`` transformed points for each of ``K``
    candidate cubes. ``radius`` is ``(M,)``, the per-point half width
    ``epsilon + delta`` with ``delta >= 0``. Returns ``(upper, lower)``,
    each of shape ``(K,)``: how many points have a fixed point within
    ``radius`` and within ``epsilon`` (Chebyshev). With ``exact=False`` the
    upper count is the raw enclosing screen of the integral volume.

    Optional necessary conditions tighten the exact upper count: a fixed
    point must also lie within ``radius_l2`` (Euclidean, ``(M,)``) and its
    norm within ``norm_slack`` of ``norms`` (``(M,)``).

    Counting for a cube stops once its upper bound is known to be at most
    ``floor``; it then reports that (still valid) bound and ``lower = -1``.
    """
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    m = pts.shape[1]
    radius = np.ascontiguousarray(np.broadcast_to(radius, m), dtype=np.float64)
    r2 = np.full(m, np.inf) if radius_l2 is None else np.ascontiguousarray(
        np.broadcast_to(radius_l2, m), dtype=np.float64)
    mn = np.zeros(m) if norms is None else np.ascontiguousarray(norms, dtype=np.float64)
    return _counts(pts, radius, r2, mn, float(norm_slack), float(epsilon), iv.lo, iv.cell,
                   iv.resolution, iv.nodes, bg.points, bg.norms, bg.starts, bool(exact), True,
                   int(floor))


_NO_NODES = np.zeros((1, 1, 1), np.int32)


def consensus_mask_count(pts, bg: BucketGrid, epsilon: float) -> int:
    """Number of ``pts`` (``(M, 3)``) with a stored point within Chebyshev ``epsilon``."""
    pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(1, -1, 3)
    radius = np.full(pts.shape[1], float(epsilon))
    inf = np.full(pts.shape[1], np.inf)
    _, lb = _counts(pts, radius, inf, np.zeros(pts.shape[1]), np.inf, float(epsilon), bg.lo, bg.cell,
                    bg.resolution, _NO_NODES, bg.points, bg.norms, bg.starts, True, False, -1)
    return int(lb[0])


@njit(cache=True)
def rotate_batch(rs, v):
    """``(K, M, 3)`` array of the ``M`` vectors ``v`` rotated by each angle-axis row of ``rs``."""
    K, M = rs.shape[0], v.shape[0]
    out = np.empty((K, M, 3))
    R = np.empty((3, 3))
    for k in range(K):
        x, y, z = rs[k, 0], rs[k, 1], rs[k, 2]
        th = np.sqrt(x * x + y * y + z * z)
        if th < 1e-12:
            R[:, :] = 0.0
            R[0, 0] = R[1, 1] = R[2, 2] = 1.0
        else:
            x, y, z = x / th, y / th, z / th
            c, s = np.cos(th), np.sin(th)
            C = 1.0 - c
            R[0, 0] = c + x * x * C
            R[0, 1] = x * y * C - z * s
            R[0, 2] = x * z * C + y * s
            R[1, 0] = y * x * C + z * s
            R[1, 1] = c + y * y * C
            R[1, 2] = y * z * C - x * s
            R[2, 0] = z * x * C - y * s
            R[2, 1] = z * y * C + x * s
            R[2, 2] = c + z * z * C
        for i in range(M):
            for a in range(3):
                out[k, i, a] = R[a, 0] * v[i, 0] + R[a, 1] * v[i, 1] + R[a, 2] * v[i, 2]
    return out


def sample_in_cube(rng, center, half, n):
    return center + rng.uniform(-half, half, size=(n, 3))
