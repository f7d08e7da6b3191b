"""Globally optimal rotation search over angle-axis space.

Maximises the number of moving vectors that land within Chebyshev distance
``epsilon`` of some fixed vector after rotation. Branches are cubes of
rotation vectors inside ``[-pi, pi]^3``.

Bound: for any rotation ``r`` in a cube with center ``c`` and half
diagonal ``alpha``, ``|R_r m - R_c m|_inf <= |R_r m - R_c m|_2 <=
delta(|m|, alpha)``. So vector ``m`` can only be an inlier somewhere in
the cube if a fixed vector lies in the axis-aligned cube of half width
``epsilon + delta`` around ``R_c m``. The integral volume rules out empty
cubes in O(1); surviving vectors are then checked exactly against the
fixed vectors in that cube, which must also pass two necessary tests
implied by the same bound (see :func:`_necessary`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import integral_volume as ivol
from .bnb import SearchConfig, best_first_search, make_auditor
from .consensus import bound_counts, consensus_mask_count, rotate_batch, sample_in_cube
from .errors import EmptyInput
from .geometry import as_cloud, project_to_pi_ball, rodrigues

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class RotationCube:
    center: np.ndarray
    half_side: float
    depth: int = 0

    @property
    def alpha(self) -> float:
        """Half diagonal: the largest angle-axis distance from the center."""
        return self.half_side * SQRT3


@dataclass
class RotationSearchResult:
    best_rotation: np.ndarray  # angle-axis, inside the pi-ball
    best_matrix: np.ndarray
    best_count: int
    final_upper_bound: int
    iterations: int
    status: str
    max_depth_reached: int
    bound_trace: list = field(default_factory=list)


def delta_r(m_norm, alpha):
    """Radius of the ball containing ``R_r m`` for all ``r`` within ``alpha`` of the center.

    ``sqrt(2 |m|^2 (1 - cos alpha))`` with ``alpha`` clamped to ``pi``,
    i.e. the chord ``2 |m| sin(alpha / 2)``.
    """
    a = np.minimum(np.asarray(alpha, dtype=np.float64), np.pi)
    m = np.asarray(m_norm, dtype=np.float64)
    # the sine form is the same quantity without cancellation at small alpha
    out = 2.0 * m * np.sin(a / 2.0)
    return float(out) if out.ndim == 0 else out


def _vectors(tivs):
    return as_cloud(getattr(tivs, "vectors", tivs))


def objective_r(tivs_moving, scene_grid: ivol.BucketGrid, R, epsilon_r: float) -> int:
    """Number of rotated moving vectors with a fixed vector within ``epsilon_r`` (Chebyshev)."""
    v = _vectors(tivs_moving)
    rot = v @ np.asarray(R, dtype=np.float64).T
    return consensus_mask_count(rot, scene_grid, epsilon_r)


def upper_bound_r(tivs_moving, scene_iv: ivol.IntegralVolume, cube: RotationCube,
                  epsilon_r: float, scene_grid: ivol.BucketGrid | None = None) -> int:
    """Upper bound of :func:`objective_r` over every rotation in ``cube``.

    With only the integral volume this is the grid-snapped (enclosing) count
    of vectors whose uncertainty cube holds a fixed vector. Passing the
    bucket grid makes the per-vector test exact.
    """
    v = _vectors(tivs_moving)
    norms = np.linalg.norm(v, axis=1)
    radius = epsilon_r + delta_r(norms, cube.alpha)
    rot = (v @ rodrigues(cube.center).T)[None]
    if scene_grid is None:
        r = radius[:, None]
        return int(np.count_nonzero(scene_iv.count(rot[0] - r, rot[0] + r) > 0))
    delta = radius - epsilon_r
    ub, _ = bound_counts(rot, radius, scene_iv, scene_grid, epsilon_r, True, -1,
                         *_necessary(delta, norms, epsilon_r))
    return int(ub[0])


def _necessary(delta, norms, epsilon_r):
    """Extra conditions any matching fixed vector ``s`` must meet.

    If ``|R_r m - s|_inf <= eps`` for some ``r`` in the cube then
    ``|R_c m - s|_2 <= delta + sqrt(3) eps`` and, as rotations keep norms,
    ``||s| - |m|| <= sqrt(3) eps``. The slack covers rounding.
    """
    slack = SQRT3 * epsilon_r * (1.0 + 1e-9) + 1e-12
    return delta * (1.0 + 1e-9) + slack, norms, slack


def cube_outside_pi_ball(centers, half) -> np.ndarray:
    """True for cubes whose closest point to the origin has norm > pi."""
    closest = np.clip(0.0, centers - half, centers + half)
    return np.linalg.norm(closest, axis=-1) > np.pi


def bnb_rotation_search(tivs_moving, tivs_scene, epsilon_r: float,
                        config: SearchConfig | None = None,
                        resolution=(51, 51, 51), scene_structures=None) -> RotationSearchResult:
    """Globally maximise :func:`objective_r` over all rotations.

    ``scene_structures`` may pass a prebuilt ``(IntegralVolume, BucketGrid)``
    over the scene vectors; otherwise they are built over the scene's
    bounding box, padded by ``epsilon_r``.
    """
    config = config or SearchConfig()
    moving = _vectors(tivs_moving)
    scene = _vectors(tivs_scene)
    if len(moving) == 0 or len(scene) == 0:
        raise EmptyInput("rotation search needs non-empty moving and scene vector sets")
    if epsilon_r <= 0:
        raise ValueError("epsilon_r must be > 0")
    if scene_structures is None:
        scene_structures = build_scene_structures(scene, epsilon_r, resolution)
    iv, bg = scene_structures
    norms = np.linalg.norm(moving, axis=1)

    def evaluate(centers, half, floor):
        delta = delta_r(norms, half * SQRT3)
        rot = rotate_batch(centers, moving)
        ub, lb = bound_counts(rot, epsilon_r + delta, iv, bg, epsilon_r, config.exact_bounds,
                              floor, *_necessary(delta, norms, epsilon_r))
        # centers outside the pi-ball are scored at their radial projection
        pts = centers.copy()
        out = (np.linalg.norm(centers, axis=1) > np.pi) & (lb >= 0)
        if out.any():
            pts[out] = centers[out] * (np.pi / np.linalg.norm(centers[out], axis=1))[:, None]
            proj = rotate_batch(pts[out], moving)
            _, lb_proj = bound_counts(proj, epsilon_r, iv, bg, epsilon_r)
            lb = lb.copy()
            lb[out] = lb_proj
        return ub, lb, pts

    def keep(centers, half):
        return ~cube_outside_pi_ball(centers, half)

    audit = None
    if config.audit:
        audit = make_auditor(
            lambda r: objective_r(moving, bg, rodrigues(r), epsilon_r),
            sample_in_cube, config,
        )

    out = best_first_search(np.zeros(3), np.pi, evaluate, config, keep=keep, audit=audit)
    best_r = project_to_pi_ball(out.best_point)
    return RotationSearchResult(
        best_rotation=best_r,
        best_matrix=rodrigues(best_r),
        best_count=out.best_count,
        final_upper_bound=out.final_upper_bound,
        iterations=out.iterations,
        status=out.status,
        max_depth_reached=out.max_depth_reached,
        bound_trace=out.bound_trace,
    )


def build_scene_structures(scene_vectors, epsilon, resolution=(51, 51, 51)):
    """Integral volume and bucket grid over the padded bounding box of ``scene_vectors``."""
    return ivol.build_padded(scene_vectors, epsilon, resolution)
