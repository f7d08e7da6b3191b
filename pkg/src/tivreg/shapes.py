"""Procedural base shapes for synthetic experiments.

Stand-ins for scanned models: surface samples of asymmetric objects, so
every test instance has a unique optimal rotation. All shapes are
deterministic in ``seed`` and scaled uniformly into the unit cube.
"""

from __future__ import annotations

import numpy as np


def fit_unit_cube(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    lo = p.min(axis=0)
    return (p - lo) / float(np.max(p.max(axis=0) - lo))


def _sphere_dirs(rng, n):
    u = rng.normal(size=(n, 3))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def blob(n, rng):
    """Sphere with a handful of smooth bumps and dents at fixed directions."""
    dirs = _sphere_dirs(np.random.default_rng(11), 7)
    amps = np.array([0.45, -0.25, 0.3, 0.2, -0.15, 0.35, 0.25])
    u = _sphere_dirs(rng, n)
    r = 1.0 + (amps * np.exp(4.0 * (u @ dirs.T - 1.0))).sum(axis=1)
    return u * r[:, None]


def _ellipsoid(rng, n, center, axes):
    return center + _sphere_dirs(rng, n) * axes


def bunny(n, rng):
    """Ellipsoid body with a head, two ears of different length and a tail."""
    parts = [  # center, semi-axes, share of the points
        ((0.0, 0.0, 0.0), (0.55, 0.38, 0.33), 0.5),
        ((0.5, 0.05, 0.3), (0.2, 0.18, 0.19), 0.2),
        ((0.55, 0.12, 0.6), (0.05, 0.04, 0.2), 0.1),
        ((0.5, -0.06, 0.52), (0.05, 0.04, 0.13), 0.08),
        ((-0.6, 0.0, 0.05), (0.09, 0.09, 0.09), 0.12),
    ]
    shares = np.array([p[2] for p in parts])
    counts = rng.multinomial(n, shares / shares.sum())
    pts = [_ellipsoid(rng, k, np.array(c), np.array(a)) for (c, a, _), k in zip(parts, counts)]
    return np.concatenate(pts)


def terrain(n, rng):
    """Open height-field patch with uneven hills."""
    xy = rng.uniform(0.0, 1.0, size=(n, 2))
    hills = [((0.25, 0.3), 0.35, 0.12), ((0.7, 0.65), 0.25, 0.1),
             ((0.8, 0.2), -0.2, 0.08), ((0.4, 0.8), 0.15, 0.15)]
    z = 0.15 * xy[:, 0] ** 2
    for (cx, cy), h, w in hills:
        z += h * np.exp(-((xy[:, 0] - cx) ** 2 + (xy[:, 1] - cy) ** 2) / (2 * w * w))
    return np.column_stack([xy, z])


def knot(n, rng):
    """Trefoil tube with a tube radius that swells along the curve."""
    s = rng.uniform(0.0, 2 * np.pi, size=n)
    phi = rng.uniform(0.0, 2 * np.pi, size=n)

    def curve(s):
        return np.column_stack([
            np.sin(s) + 2 * np.sin(2 * s),
            np.cos(s) - 2 * np.cos(2 * s),
            -np.sin(3 * s) * (1.0 + 0.4 * np.cos(s)),
        ])

    c = curve(s)
    tangent = curve(s + 1e-4) - curve(s - 1e-4)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    ref = np.array([0.0, 0.0, 1.0])
    n1 = np.cross(tangent, ref)
    n1 /= np.linalg.norm(n1, axis=1, keepdims=True)
    n2 = np.cross(tangent, n1)
    radius = 0.25 + 0.2 * (1 + np.sin(s + 0.7)) / 2
    off = radius[:, None] * (np.cos(phi)[:, None] * n1 + np.sin(phi)[:, None] * n2)
    return (c + off) * np.array([1.0, 0.8, 1.3])


SHAPES = {"blob": blob, "bunny": bunny, "terrain": terrain, "knot": knot}


def make_shape(name: str, n: int = 500, seed: int = 0) -> np.ndarray:
    """``n`` surface samples of shape ``name``, scaled into ``[0, 1]^3``."""
    try:
        fn = SHAPES[name]
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}") from None
    return fit_unit_cube(fn(n, np.random.default_rng(seed)))
