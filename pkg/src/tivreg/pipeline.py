"""End-to-end registration: TIV rotation search, then translation search.

TIVs (pairwise differences within one cloud) do not change when the cloud
is translated, so the rotation can be searched on its own. The rotated
model then only needs a translation, which is searched in a second BnB.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import integral_volume as ivol
from .bnb import SearchConfig
from .errors import NormalizationDegenerate, TooFewPoints
from .geometry import RigidTransform, as_cloud
from .rotation import RotationSearchResult, bnb_rotation_search
from .tiv import TivSet, construct_all_tivs, select_norm_band, select_tivs
from .translation import DEFAULT_RANGE, TranslationSearchResult, bnb_translation_search

SQRT3 = np.sqrt(3.0)
SCENE_SELECTIONS = ("band", "rank")


@dataclass
class RegistrationConfig:
    epsilon: float = 0.005
    iv_resolution: tuple = (51, 51, 51)
    tiv_delete: int = 5000
    tiv_keep: int = 200
    gap_r: int = 0
    gap_t: int = 0
    # (lo, hi) corners, or None to derive the box from the rotated clouds
    translation_range: tuple | None = DEFAULT_RANGE
    normalize: bool = True
    rng_seed: int = 0
    max_depth: int = 25
    # expanded cubes per search before giving up with a best-effort result
    max_iterations: int | None = None
    # "band": every scene TIV whose norm could match a selected model TIV;
    # "rank": the same delete/keep rank window as the model
    scene_selection: str = "band"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        self.iv_resolution = tuple(int(n) for n in self.iv_resolution)
        if len(self.iv_resolution) != 3 or min(self.iv_resolution) < 1:
            raise ValueError(f"iv_resolution must be three integers >= 1, got {self.iv_resolution}")
        if self.tiv_delete < 0 or self.tiv_keep < 1:
            raise ValueError("need tiv_delete >= 0 and tiv_keep >= 1")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.gap_r < 0 or self.gap_t < 0:
            raise ValueError("gaps must be >= 0")
        if self.scene_selection not in SCENE_SELECTIONS:
            raise ValueError(f"scene_selection must be one of {SCENE_SELECTIONS}")


@dataclass
class RegistrationResult:
    transform: RigidTransform
    rotation_result: RotationSearchResult
    translation_result: TranslationSearchResult
    timings: dict = field(default_factory=dict)
    model_tivs: int = 0
    scene_tivs: int = 0


@dataclass(frozen=True)
class Normalization:
    """``x_normalized = scale * x + offset``, shared by both clouds."""

    scale: float
    offset: np.ndarray

    def apply(self, points) -> np.ndarray:
        return self.scale * as_cloud(points) + self.offset

    def invert(self, points) -> np.ndarray:
        return (as_cloud(points) - self.offset) / self.scale

    def denormalize(self, T: RigidTransform) -> RigidTransform:
        """The transform in original units whose normalized form is ``T``."""
        # s*y + o = R (s*x + o) + t  =>  y = R x + (R o + t - o) / s
        t = (T.rotation @ self.offset + T.translation - self.offset) / self.scale
        return RigidTransform(T.rotation, t)


def normalize_to_unit_cube(model, scene):
    """Jointly scale and shift both clouds so their union just fits in ``[0, 1]^3``."""
    model = as_cloud(model)
    scene = as_cloud(scene)
    both = np.vstack([model, scene])
    if len(both) == 0:
        raise NormalizationDegenerate("cannot normalize empty clouds")
    lo = both.min(axis=0)
    extent = float(np.max(both.max(axis=0) - lo))
    if not extent > 0:
        raise NormalizationDegenerate("joint bounding box has zero extent")
    record = Normalization(1.0 / extent, -lo / extent)
    return record.apply(model), record.apply(scene), record


def denormalize(record: Normalization, T: RigidTransform) -> RigidTransform:
    return record.denormalize(T)


def clamp_delete(pool: int, delete: int, keep: int) -> int:
    """Shrink ``delete`` so at least ``keep`` TIVs (or the whole pool) survive."""
    return max(0, min(delete, pool - keep))


def select_scene_tivs(scene_all: TivSet, model_sel: TivSet, config: RegistrationConfig) -> TivSet:
    if config.scene_selection == "rank":
        delete = clamp_delete(len(scene_all), config.tiv_delete, config.tiv_keep)
        return select_tivs(scene_all, delete, config.tiv_keep)
    # a rotated model TIV within epsilon (Chebyshev) of a scene TIV has a
    # norm within sqrt(3) * epsilon of it, so nothing else can ever match
    slack = SQRT3 * config.epsilon
    return select_norm_band(scene_all, model_sel.norms.min() - slack, model_sel.norms.max() + slack)


def auto_translation_range(model_rotated, scene, epsilon: float):
    """Every translation that can make any rotated model point an inlier."""
    return (scene.min(axis=0) - model_rotated.max(axis=0) - epsilon,
            scene.max(axis=0) - model_rotated.min(axis=0) + epsilon)


def register(model, scene, config: RegistrationConfig | None = None) -> RegistrationResult:
    """Estimate the rigid transform taking ``model`` onto ``scene``."""
    config = config or RegistrationConfig()
    model = as_cloud(model)
    scene = as_cloud(scene)
    if len(model) < 2 or len(scene) < 2:
        raise TooFewPoints("registration needs at least 2 points in each cloud")
    timings = {}
    t_start = time.perf_counter()

    record = None
    if config.normalize:
        model, scene, record = normalize_to_unit_cube(model, scene)
    eps = config.epsilon

    t0 = time.perf_counter()
    model_all = construct_all_tivs(model)
    scene_all = construct_all_tivs(scene)
    delete = clamp_delete(len(model_all), config.tiv_delete, config.tiv_keep)
    model_sel = select_tivs(model_all, delete, config.tiv_keep)
    scene_sel = select_scene_tivs(scene_all, model_sel, config)
    timings["tiv"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rot_structures = ivol.build_padded(scene_sel.vectors, eps, config.iv_resolution)
    timings["iv_rotation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rot = bnb_rotation_search(
        model_sel, scene_sel, eps,
        SearchConfig(gap=config.gap_r, max_depth=config.max_depth,
                     max_iterations=config.max_iterations),
        scene_structures=rot_structures,
    )
    timings["rotation"] = time.perf_counter() - t0

    model_rotated = model @ rot.best_matrix.T
    t0 = time.perf_counter()
    trans_structures = ivol.build_padded(scene, eps, config.iv_resolution)
    timings["iv_translation"] = time.perf_counter() - t0

    trange = config.translation_range
    if trange is None:
        trange = auto_translation_range(model_rotated, scene, eps)
    t0 = time.perf_counter()
    trans = bnb_translation_search(
        model_rotated, scene, eps,
        SearchConfig(gap=config.gap_t, max_depth=config.max_depth,
                     max_iterations=config.max_iterations),
        trange=trange, scene_structures=trans_structures,
    )
    timings["translation"] = time.perf_counter() - t0

    T = RigidTransform(rot.best_matrix, trans.best_translation)
    if record is not None:
        T = record.denormalize(T)
    timings["total"] = time.perf_counter() - t_start
    return RegistrationResult(T, rot, trans, timings, len(model_sel), len(scene_sel))
