"""Translation-invariant vectors (pairwise point differences).

Differences between two points of the same cloud do not change when the
cloud is translated, and they rotate with the cloud. Matching the
difference vectors of two clouds therefore isolates the rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySelection, TooFewPoints
from .geometry import as_cloud


@dataclass(frozen=True)
class TivSet:
    """Difference vectors with their source index pairs.

    ``vectors[k] = points[pairs[k, 1]] - points[pairs[k, 0]]``.
    """

    vectors: np.ndarray
    pairs: np.ndarray
    norms: np.ndarray
    delete_top_k: int = 0
    keep_top_k: int = 0

    def __len__(self) -> int:
        return len(self.vectors)


def construct_all_tivs(cloud) -> TivSet:
    """All ordered-pair differences, ``i1``-major then ``i2``, skipping ``i1 == i2``."""
    pts = as_cloud(cloud)
    n = len(pts)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points to build TIVs, got {n}")
    i1, i2 = np.divmod(np.arange(n * n), n)
    keep = i1 != i2
    i1, i2 = i1[keep], i2[keep]
    vectors = pts[i2] - pts[i1]
    pairs = np.stack([i1, i2], axis=1)
    return TivSet(vectors, pairs, np.linalg.norm(vectors, axis=1))


def _norm_order(tivs: TivSet) -> np.ndarray:
    # lexsort: last key is primary -> descending norm, then i1, then i2
    return np.lexsort((tivs.pairs[:, 1], tivs.pairs[:, 0], -tivs.norms))


def _subset(tivs: TivSet, idx, delete_top_k=0, keep_top_k=0) -> TivSet:
    return TivSet(tivs.vectors[idx], tivs.pairs[idx], tivs.norms[idx], delete_top_k, keep_top_k)


def select_tivs(tivs: TivSet, delete_top_k: int, keep_top_k: int) -> TivSet:
    """Drop the ``delete_top_k`` longest vectors, keep the next ``keep_top_k``.

    Ties in norm are broken by ``(i1, i2)`` so the result does not depend on
    the sort implementation.
    """
    if delete_top_k < 0 or keep_top_k < 1:
        raise ValueError("delete_top_k must be >= 0 and keep_top_k >= 1")
    order = _norm_order(tivs)
    rest = order[min(delete_top_k, len(order)):]
    if len(rest) == 0:
        raise EmptySelection(
            f"deleting {delete_top_k} of {len(order)} TIVs leaves nothing to select"
        )
    return _subset(tivs, rest[:keep_top_k], delete_top_k, keep_top_k)


def select_norm_band(tivs: TivSet, lo: float, hi: float) -> TivSet:
    """All vectors with ``lo <= norm <= hi``, ordered like :func:`select_tivs`.

    Rotation preserves length, so a vector can only come within Chebyshev
    distance ``eps`` of a rotated vector whose norm differs by at most
    ``sqrt(3) * eps``. Selecting the scene band that way loses no candidate
    match for the selected model vectors.
    """
    order = _norm_order(tivs)
    n = tivs.norms[order]
    idx = order[(n >= lo) & (n <= hi)]
    if len(idx) == 0:
        raise EmptySelection(f"no TIV has norm in [{lo:.6g}, {hi:.6g}]")
    return _subset(tivs, idx)
