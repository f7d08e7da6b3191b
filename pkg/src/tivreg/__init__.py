"""Globally optimal rigid registration of 3D point sets.

Rotation is searched first, by branch and bound over translation-invariant
vectors (pairwise differences inside each cloud); translation follows with a
second branch and bound. Both count candidate inliers with a 3D integral
volume.
"""

from .bnb import BoundViolation, SearchConfig
from .errors import (
    CloudIOError,
    DegenerateBounds,
    EmptyInput,
    EmptySelection,
    NoCorrespondences,
    NormalizationDegenerate,
    ParseError,
    TivregError,
    TooFewPoints,
    UnsupportedFormat,
)
from .geometry import RigidTransform, angular_error, dist_linf, rodrigues
from .integral_volume import BucketGrid, IntegralVolume, Mode, build, count_in_cuboid
from .io import downsample, load_cloud, save_cloud
from .pipeline import RegistrationConfig, RegistrationResult, normalize_to_unit_cube, register
from .rotation import bnb_rotation_search, delta_r, objective_r, upper_bound_r
from .tiv import TivSet, construct_all_tivs, select_tivs
from .translation import bnb_translation_search, objective_t, upper_bound_t

__version__ = "0.1.0"
