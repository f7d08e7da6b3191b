"""Globally optimal translation search for already rotated model points.

Every translation in a cube of half side ``h`` around ``t_c`` moves a point
by at most ``h`` per axis relative to ``t_c``, so the uncertainty region
of a translated point is exactly a cube and the bound needs no norm slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import integral_volume as ivol
from .bnb import SearchConfig, best_first_search, make_auditor
from .consensus import bound_counts, consensus_mask_count, sample_in_cube
from .errors import EmptyInput
from .geometry import as_cloud

DEFAULT_RANGE = (np.full(3, -1.0), np.full(3, 1.0))


@dataclass(frozen=True)
class TranslationCube:
    center: np.ndarray
    half_side: float
    depth: int = 0


@dataclass
class TranslationSearchResult:
    best_translation: np.ndarray
    best_count: int
    final_upper_bound: int
    iterations: int
    status: str
    max_depth_reached: int
    bound_trace: list = field(default_factory=list)


def objective_t(model_rotated, scene_grid: ivol.BucketGrid, t, epsilon_t: float) -> int:
    """Number of translated model points with a scene point within ``epsilon_t`` (Chebyshev)."""
    pts = as_cloud(model_rotated) + np.asarray(t, dtype=np.float64)
    return consensus_mask_count(pts, scene_grid, epsilon_t)


def upper_bound_t(model_rotated, scene_iv: ivol.IntegralVolume, cube: TranslationCube,
                  epsilon_t: float, scene_grid: ivol.BucketGrid | None = None) -> int:
    """Upper bound of :func:`objective_t` over every translation in ``cube``."""
    pts = (as_cloud(model_rotated) + cube.center)[None]
    radius = np.full(pts.shape[1], epsilon_t + cube.half_side)
    if scene_grid is None:
        r = radius[:, None]
        return int(np.count_nonzero(scene_iv.count(pts[0] - r, pts[0] + r) > 0))
    ub, _ = bound_counts(pts, radius, scene_iv, scene_grid, epsilon_t)
    return int(ub[0])


def enclosing_cube(lo, hi):
    """Center and half side of the smallest cube containing the box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=np.float64).reshape(3)
    hi = np.asarray(hi, dtype=np.float64).reshape(3)
    if np.any(hi - lo <= 0):
        raise ValueError(f"translation range needs positive extent, got {lo}..{hi}")
    return (lo + hi) / 2.0, float(np.max(hi - lo)) / 2.0


def bnb_translation_search(model_rotated, scene, epsilon_t: float,
                           config: SearchConfig | None = None, trange=DEFAULT_RANGE,
                           resolution=(51, 51, 51), scene_structures=None
                           ) -> TranslationSearchResult:
    """Globally maximise :func:`objective_t` over translations in ``trange``.

    A non-cubic ``trange`` is replaced by its smallest enclosing cube.
    """
    config = config or SearchConfig()
    model = as_cloud(model_rotated)
    scene = as_cloud(scene)
    if len(model) == 0 or len(scene) == 0:
        raise EmptyInput("translation search needs non-empty model and scene")
    if epsilon_t <= 0:
        raise ValueError("epsilon_t must be > 0")
    if scene_structures is None:
        scene_structures = ivol.build_padded(scene, epsilon_t, resolution)
    iv, bg = scene_structures
    center, half = enclosing_cube(*trange)

    def evaluate(centers, h, floor):
        pts = model[None, :, :] + centers[:, None, :]
        radius = np.full(len(model), epsilon_t + h)
        ub, lb = bound_counts(pts, radius, iv, bg, epsilon_t, config.exact_bounds, floor)
        return ub, lb, centers

    audit = None
    if config.audit:
        audit = make_auditor(lambda t: objective_t(model, bg, t, epsilon_t), sample_in_cube, config)

    out = best_first_search(center, half, evaluate, config, audit=audit)
    return TranslationSearchResult(
        best_translation=out.best_point,
        best_count=out.best_count,
        final_upper_bound=out.final_upper_bound,
        iterations=out.iterations,
        status=out.status,
        max_depth_reached=out.max_depth_reached,
        bound_trace=out.bound_trace,
    )
