import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import consensus_linf
from tivreg.consensus import bound_counts, consensus_mask_count, rotate_batch, sample_in_cube
from tivreg.geometry import rodrigues
from tivreg.integral_volume import build, build_padded


def _brute(pts, fixed, radius, radius_l2=None, norms=None, slack=np.inf):
    n = 0
    for i, p in enumerate(pts):
        d = np.abs(fixed - p)
        ok = d.max(axis=1) <= radius[i]
        if radius_l2 is not None:
            ok &= np.sqrt((d * d).sum(axis=1)) <= radius_l2[i]
        if norms is not None:
            ok &= np.abs(np.linalg.norm(fixed, axis=1) - norms[i]) <= slack
        n += bool(ok.any())
    return n


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([1, 4, 13]))
def test_counts_match_brute_force(seed, res):
    rng = np.random.default_rng(seed)
    fixed = rng.uniform(size=(150, 3))
    iv, bg = build_padded(fixed, 0.02, (res, res, res))
    pts = rng.uniform(-0.1, 1.1, size=(3, 60, 3))
    radius = rng.uniform(0.02, 0.15, size=60)
    ub, lb = bound_counts(pts, radius, iv, bg, 0.02)
    for k in range(3):
        assert ub[k] == _brute(pts[k], fixed, radius)
        assert lb[k] == consensus_linf(pts[k], fixed, 0.02)


def test_screen_only_is_upper_bound(rng):
    fixed = rng.uniform(size=(150, 3))
    iv, bg = build_padded(fixed, 0.02, (6, 6, 6))
    pts = rng.uniform(size=(4, 50, 3))
    radius = np.full(50, 0.05)
    exact, _ = bound_counts(pts, radius, iv, bg, 0.02)
    screen, _ = bound_counts(pts, radius, iv, bg, 0.02, exact=False)
    assert np.all(screen >= exact)


def test_necessary_conditions(rng):
    fixed = rng.normal(size=(200, 3))
    iv, bg = build_padded(fixed, 0.05, (9, 9, 9))
    pts = rng.normal(size=(2, 40, 3))
    radius = np.full(40, 0.4)
    r2 = np.full(40, 0.45)
    norms = np.linalg.norm(pts[0], axis=1)
    ub, _ = bound_counts(pts[:1], radius, iv, bg, 0.05, radius_l2=r2, norms=norms, norm_slack=0.1)
    assert ub[0] == _brute(pts[0], fixed, radius, r2, norms, 0.1)


def test_floor_prunes_with_valid_bound(rng):
    fixed = rng.uniform(size=(100, 3))
    iv, bg = build_padded(fixed, 0.01, (8, 8, 8))
    pts = rng.uniform(size=(5, 30, 3))
    radius = np.full(30, 0.03)
    full_ub, full_lb = bound_counts(pts, radius, iv, bg, 0.01)
    floor = int(np.median(full_ub))
    ub, lb = bound_counts(pts, radius, iv, bg, 0.01, floor=floor)
    for k in range(5):
        if full_ub[k] > floor:
            assert (ub[k], lb[k]) == (full_ub[k], full_lb[k])
        else:
            assert full_ub[k] <= ub[k] <= floor and lb[k] == -1


def test_boundary_distance_is_inclusive():
    fixed = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    _, bg = build(fixed, (3, 3, 3))
    assert consensus_mask_count([[0.25, 0.0, 0.0]], bg, 0.25) == 1
    assert consensus_mask_count([[0.25 + 1e-12, 0.0, 0.0]], bg, 0.25) == 0


def test_mask_count_matches_oracle(rng):
    fixed = rng.uniform(size=(300, 3))
    _, bg = build(fixed, (11, 11, 11))
    moved = rng.uniform(-0.05, 1.05, size=(200, 3))
    assert consensus_mask_count(moved, bg, 0.03) == consensus_linf(moved, fixed, 0.03)


def test_rotate_batch(rng):
    rs = rng.uniform(-3, 3, size=(6, 3))
    rs[0] = 0.0
    v = rng.normal(size=(10, 3))
    out = rotate_batch(rs, v)
    for k in range(6):
        np.testing.assert_allclose(out[k], v @ rodrigues(rs[k]).T, atol=1e-13)


def test_sample_in_cube(rng):
    s = sample_in_cube(rng, np.array([1.0, 2.0, 3.0]), 0.5, 100)
    assert s.shape == (100, 3)
    assert np.all(np.abs(s - [1, 2, 3]) <= 0.5)
