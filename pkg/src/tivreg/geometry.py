"""Core 3D types and helpers.

Point clouds are plain ``(N, 3)`` float64 arrays; rotation vectors are
angle-axis 3-vectors (direction = axis, norm = angle in radians).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROTATION_TOL = 1e-9
_SMALL_ANGLE = 1e-12


def as_cloud(points) -> np.ndarray:
    """Validate and return ``points`` as a contiguous ``(N, 3)`` float64 array."""
    arr = np.ascontiguousarray(points, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def hat(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(r) -> np.ndarray:
    """Rotation matrix for angle-axis vector ``r``; identity below 1e-12 rad."""
    r = np.asarray(r, dtype=np.float64)
    theta = float(np.linalg.norm(r))
    if theta < _SMALL_ANGLE:
        return np.eye(3)
    k = hat(r / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def rodrigues_batch(rs) -> np.ndarray:
    """Vectorised :func:`rodrigues` for a ``(K, 3)`` array, returns ``(K, 3, 3)``."""
    rs = np.asarray(rs, dtype=np.float64).reshape(-1, 3)
    theta = np.linalg.norm(rs, axis=1)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    k = rs / safe[:, None]
    kx, ky, kz = k[:, 0], k[:, 1], k[:, 2]
    s = np.where(small, 0.0, np.sin(theta))
    c1 = np.where(small, 0.0, 1.0 - np.cos(theta))
    out = np.empty((len(rs), 3, 3))
    out[:, 0, 0] = 1.0 + c1 * (kx * kx - 1.0)
    out[:, 1, 1] = 1.0 + c1 * (ky * ky - 1.0)
    out[:, 2, 2] = 1.0 + c1 * (kz * kz - 1.0)
    out[:, 0, 1] = c1 * kx * ky - s * kz
    out[:, 1, 0] = c1 * kx * ky + s * kz
    out[:, 0, 2] = c1 * kx * kz + s * ky
    out[:, 2, 0] = c1 * kx * kz - s * ky
    out[:, 1, 2] = c1 * ky * kz - s * kx
    out[:, 2, 1] = c1 * ky * kz + s * kx
    return out


def rotation_vector(R) -> np.ndarray:
    """Inverse of :func:`rodrigues`; returns a vector with norm in ``[0, pi]``."""
    R = np.asarray(R, dtype=np.float64)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    # atan2 keeps full precision at both ends, where arccos of the trace does not
    cos_t = (np.trace(R) - 1.0) / 2.0
    theta = float(np.arctan2(np.linalg.norm(w) / 2.0, cos_t))
    if theta < _SMALL_ANGLE:
        return np.zeros(3)
    if theta < np.pi / 2:
        return w * (theta / (2.0 * np.sin(theta)))
    # the skew part shrinks towards pi; recover the axis from the symmetric
    # part (R + R^T) / 2 = cos(t) I + (1 - cos(t)) k k^T instead
    K = ((R + R.T) / 2.0 - cos_t * np.eye(3)) / (1.0 - cos_t)
    col = int(np.argmax(np.diag(K)))
    axis = K[:, col] / np.sqrt(max(K[col, col], 1e-300))
    axis /= np.linalg.norm(axis)
    if np.dot(w, axis) < 0:
        axis = -axis
    return axis * theta


def is_rotation(R, tol: float = ROTATION_TOL) -> bool:
    R = np.asarray(R, dtype=np.float64)
    return (
        R.shape == (3, 3)
        and np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0.0)
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def project_to_pi_ball(r) -> np.ndarray:
    """Radially project a rotation vector onto the closed ball of radius pi."""
    r = np.asarray(r, dtype=np.float64)
    n = float(np.linalg.norm(r))
    if n <= np.pi:
        return r.copy()
    return r * (np.pi / n)


@dataclass(frozen=True)
class RigidTransform:
    """``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not is_rotation(R):
            raise ValueError("rotation is not orthonormal with det +1")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rotation_vector(cls, r, t=(0.0, 0.0, 0.0)) -> RigidTransform:
        return cls(rodrigues(r), t)

    def apply(self, points) -> np.ndarray:
        """Transform a single point ``(3,)`` or a cloud ``(N, 3)``."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def compose(self, first: RigidTransform) -> RigidTransform:
        """Return ``self o first`` (apply ``first``, then ``self``)."""
        return RigidTransform(
            self.rotation @ first.rotation,
            self.rotation @ first.translation + self.translation,
        )

    def inverse(self) -> RigidTransform:
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def rotation_vector(self) -> np.ndarray:
        return rotation_vector(self.rotation)


def apply(T: RigidTransform, p) -> np.ndarray:
    return T.apply(p)


def dist_linf(a, b) -> float:
    """Chebyshev distance between two points."""
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def angular_error(R_est, R_gt) -> float:
    """Geodesic angle (radians) between two rotation matrices."""
    c = (np.trace(np.asarray(R_est).T @ np.asarray(R_gt)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation vector with axis uniform on the sphere and angle uniform in [0, pi]."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis * rng.uniform(0.0, np.pi)
