"""Best-first branch and bound over cubes in R^3.

Shared by the rotation and translation searches. A cube is a center and a
half side length; it is split into its eight octants. The caller supplies
a batched ``evaluate(centers, half, floor)`` returning per-cube upper
bounds, the objective value at a feasible point of each cube, and that
point. ``floor`` is the incumbent count: a cube whose bound cannot beat it
may report any valid bound at most ``floor`` and a lower value of -1.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

OCTANTS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))

OPTIMAL = "optimal"
BEST_EFFORT = "best_effort"


@dataclass
class SearchConfig:
    gap: int = 0
    max_depth: int = 25
    # check every enqueued cube's bound against sampled interior points
    audit: bool = False
    audit_samples: int = 100
    audit_seed: int = 0
    # refine grid-snapped bounds with exact nearest-neighbour distances
    exact_bounds: bool = True
    # stop after this many expanded cubes (None: no limit); the result is
    # then best effort with the largest open bound as its certificate
    max_iterations: int | None = None

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError("gap must be >= 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class SearchOutcome:
    best_point: np.ndarray
    best_count: int
    final_upper_bound: int
    iterations: int
    status: str
    max_depth_reached: int
    # rows of (elapsed seconds, upper bound, lower bound)
    bound_trace: list = field(default_factory=list)


class BoundViolation(AssertionError):
    """Raised in audit mode when a cube's upper bound is below a sampled value."""


def best_first_search(root_center, root_half, evaluate, config: SearchConfig,
                      keep=None, audit=None) -> SearchOutcome:
    """Maximise a consensus count by best-first branch and bound.

    Cubes are popped by largest upper bound, then greater depth, then
    insertion order. The incumbent is updated from every newly evaluated
    cube, so pruning uses the freshest lower bound. A child's bound is
    capped at its parent's, which keeps the popped bounds non-increasing.
    Cubes rejected by ``keep(centers, half)`` are dropped before evaluation.
    The search stops when the queue is empty or the top bound is within
    ``config.gap`` of the incumbent, or after ``config.max_iterations``
    expanded cubes. Cubes at ``config.max_depth`` are set aside unsplit and
    their bounds kept in the certificate, so either safeguard can leave a
    best-effort status.
    """
    t0 = time.perf_counter()
    root_center = np.asarray(root_center, dtype=np.float64).reshape(1, 3)
    ub, lb, pts = evaluate(root_center, float(root_half), -1)
    best = int(lb[0])
    best_point = pts[0].copy()
    if audit is not None:
        audit(root_center[0], float(root_half), int(ub[0]))

    trace = [(0.0, int(ub[0]), best)]
    heap = [(-int(ub[0]), 0, 0, root_center[0], float(root_half))]
    seq = 1
    iterations = 0
    unresolved = -1
    deepest = 0
    stop_bound = None

    while heap:
        neg_ub, neg_depth, _, center, half = heapq.heappop(heap)
        cube_ub, depth = -neg_ub, -neg_depth
        if cube_ub - best <= config.gap or iterations == config.max_iterations:
            stop_bound = cube_ub
            break
        iterations += 1
        if depth >= config.max_depth:
            unresolved = max(unresolved, cube_ub)
            continue
        child_half = half / 2.0
        centers = center + child_half * OCTANTS
        if keep is not None:
            centers = centers[keep(centers, child_half)]
            if len(centers) == 0:
                continue
        ub, lb, pts = evaluate(centers, child_half, best)
        ub = np.minimum(ub, cube_ub)
        k = int(np.argmax(lb))
        if lb[k] > best:
            best = int(lb[k])
            best_point = pts[k].copy()
        for c, u in zip(centers, ub):
            u = int(u)
            if audit is not None:
                audit(c, child_half, u)
            if u > best:
                heapq.heappush(heap, (-u, -(depth + 1), seq, c, child_half))
                seq += 1
                deepest = max(deepest, depth + 1)
        upper = max(cube_ub, unresolved)
        if upper != trace[-1][1] or best != trace[-1][2]:
            trace.append((time.perf_counter() - t0, upper, best))

    if stop_bound is not None:
        final_ub = max(stop_bound, unresolved, best)
    else:
        final_ub = max(unresolved, best)
    status = OPTIMAL if final_ub - best <= config.gap else BEST_EFFORT
    trace.append((time.perf_counter() - t0, final_ub, best))
    return SearchOutcome(best_point, best, int(final_ub), iterations, status, deepest, trace)


def make_auditor(objective, sample, config: SearchConfig):
    """Audit hook: ``objective`` at ``config.audit_samples`` points drawn by
    ``sample(rng, center, half, n)`` must not exceed the cube's bound."""
    rng = np.random.default_rng(config.audit_seed)

    def audit(center, half, ub):
        for x in sample(rng, center, half, config.audit_samples):
            val = objective(x)
            if val > ub:
                raise BoundViolation(
                    f"bound {ub} < objective {val} at {x} in cube "
                    f"center={center} half={half}"
                )

    return audit
