import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trafficpaths import currents
from trafficpaths.currents import AtomicMeasure, AffineMap, BallProjection, Config
from trafficpaths.geometry import Ball, BallRegion

from conftest import random_acyclic_path


def seg(ax, ay, bx, by, th):
    return (np.array([ax, ay], dtype=float), np.array([bx, by], dtype=float), th)


# ---------------------------------------------------------------------------
# measures


def test_measure_merges_close_atoms_and_drops_zeros():
    mu = AtomicMeasure.from_atoms([((0.0, 0.0), 1.0), ((0.0, 1e-10), 2.0),
                                   ((1.0, 0.0), 1e-13)])
    assert len(mu.masses) == 1
    assert mu.total() == pytest.approx(3.0)


def test_measure_parts_and_tv():
    mu = AtomicMeasure.from_atoms([((0.0, 0.0), 2.0), ((1.0, 0.0), -0.5)])
    assert mu.total() == pytest.approx(1.5)
    assert mu.tv() == pytest.approx(2.5)
    assert mu.positive_part().total() == pytest.approx(2.0)
    # negative part is returned with positive masses
    assert mu.negative_part().total() == pytest.approx(0.5)
    assert mu.negative_part().is_nonnegative()


def test_measure_restrict():
    mu = AtomicMeasure.from_atoms([((0.0, 0.0), 1.0), ((3.0, 0.0), 1.0)])
    region = BallRegion.union_of([Ball(np.array([0.0, 0.0]), 1.0)])
    assert mu.restrict(region).total() == pytest.approx(1.0)


def test_config_threshold():
    assert Config(alpha=0.6, dimension=2, ambient_radius=4.0).sphere_reduction_ok()
    assert Config(alpha=0.6, dimension=3, ambient_radius=4.0).sphere_reduction_ok()
    assert not Config(alpha=0.4, dimension=3, ambient_radius=4.0).sphere_reduction_ok()
    with pytest.raises(ValueError, match="alpha"):
        Config(alpha=1.5, dimension=2, ambient_radius=4.0)
    with pytest.raises(ValueError, match="dimension"):
        Config(alpha=0.6, dimension=4, ambient_radius=4.0)


# ---------------------------------------------------------------------------
# path construction and masses


def test_single_segment_masses_and_boundary():
    t = currents.from_segments([seg(0, 0, 3, 4, 2.0)])
    assert currents.mass(t) == pytest.approx(10.0)
    assert currents.alpha_mass(t, 0.5) == pytest.approx(5.0 * math.sqrt(2.0))
    bnd = currents.boundary(t)
    assert bnd.mass_at([3.0, 4.0]) == pytest.approx(2.0)
    assert bnd.mass_at([0.0, 0.0]) == pytest.approx(-2.0)


def test_antiparallel_segments_cancel():
    t = currents.from_segments([seg(0, 0, 1, 0, 1.0), seg(1, 0, 0, 0, 1.0)])
    assert t.is_empty()


def test_overlay_merges_collinear_overlap():
    t = currents.overlay([seg(0, 0, 2, 0, 1.0), seg(1, 0, 3, 0, 1.0)])
    assert currents.mass(t) == pytest.approx(4.0)
    # middle stretch carries multiplicity 2
    thetas = sorted(th for _, _, th in t.segments())
    assert thetas == pytest.approx([1.0, 1.0, 2.0])
    assert currents.alpha_mass(t, 0.5) == pytest.approx(2.0 + math.sqrt(2.0))


def test_overlay_cancels_opposite_runs():
    t = currents.overlay([seg(0, 0, 2, 0, 1.0), seg(2, 0, 1, 0, 1.0)])
    assert currents.mass(t) == pytest.approx(1.0)
    bnd = currents.boundary(t)
    assert bnd.mass_at([1.0, 0.0]) == pytest.approx(1.0)


def test_add_subtract_reverse_scale():
    t = currents.from_segments([seg(0, 0, 1, 0, 1.5)])
    assert currents.subtract(t, t).is_empty()
    assert currents.mass(currents.add(t, t)) == pytest.approx(3.0)
    r = currents.reverse(t)
    assert currents.boundary(r).mass_at([0.0, 0.0]) == pytest.approx(1.5)
    s = currents.scale(t, 2.0)
    assert currents.alpha_mass(s, 0.5) == pytest.approx(
        2.0 ** 0.5 * currents.alpha_mass(t, 0.5))


def test_scale_rejects_negative():
    t = currents.from_segments([seg(0, 0, 1, 0, 1.0)])
    with pytest.raises(ValueError):
        currents.scale(t, -1.0)


# ---------------------------------------------------------------------------
# invariants on random acyclic paths


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_alpha_mass_subadditive_and_scaling(seed):
    rng = np.random.default_rng(seed)
    t1 = random_acyclic_path(rng, max_edges=10)
    t2 = random_acyclic_path(rng, max_edges=10)
    alpha = float(rng.uniform(0.1, 1.0))
    lhs = currents.alpha_mass(currents.add(t1, t2), alpha)
    rhs = currents.alpha_mass(t1, alpha) + currents.alpha_mass(t2, alpha)
    assert lhs <= rhs + 1e-9
    lam = float(rng.uniform(0.1, 5.0))
    assert currents.alpha_mass(currents.scale(t1, lam), alpha) == pytest.approx(
        lam ** alpha * currents.alpha_mass(t1, alpha), rel=1e-11)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_boundary_of_sum_is_sum_of_boundaries(seed):
    rng = np.random.default_rng(seed)
    t1 = random_acyclic_path(rng, max_edges=12)
    t2 = random_acyclic_path(rng, max_edges=12)
    lhs = currents.boundary(currents.add(t1, t2))
    rhs = currents.boundary(t1) + currents.boundary(t2)
    assert (lhs - rhs).tv() <= 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_restriction_splits_mass_exactly(seed):
    rng = np.random.default_rng(seed)
    t = random_acyclic_path(rng, max_edges=15)
    ball = Ball(rng.uniform(-1.5, 1.5, size=2), float(rng.uniform(0.5, 2.0)))
    region = BallRegion.union_of([ball])
    inside = currents.restrict(t, region)
    outside = currents.restrict(t, region.complemented())
    for alpha in (0.5, 0.8, 1.0):
        total = currents.alpha_mass(t, alpha)
        split = currents.alpha_mass(inside, alpha) + currents.alpha_mass(outside, alpha)
        assert split == pytest.approx(total, abs=1e-9, rel=1e-9)


# ---------------------------------------------------------------------------
# push-forward


def test_push_forward_affine_exact():
    t = currents.from_segments([seg(0, 0, 1, 0, 2.0)])
    half = AffineMap(0.5 * np.eye(2), np.zeros(2))
    ht = currents.push_forward(t, half)
    assert currents.mass(ht) == pytest.approx(1.0)


def test_push_forward_collapses_to_point():
    t = currents.from_segments([seg(0, 0, 1, 0, 1.0)])
    crush = AffineMap(np.zeros((2, 2)), np.array([1.0, 1.0]))
    assert currents.push_forward(t, crush).is_empty()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), lip=st.floats(0.1, 1.0))
def test_push_forward_lipschitz_bound(seed, lip):
    rng = np.random.default_rng(seed)
    t = random_acyclic_path(rng, max_edges=12)
    f = AffineMap(lip * np.eye(2), rng.uniform(-1, 1, size=2))
    for alpha in (0.4, 1.0):
        assert currents.alpha_mass(currents.push_forward(t, f), alpha) <= \
            lip * currents.alpha_mass(t, alpha) + 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_push_forward_ball_projection_bound(seed):
    rng = np.random.default_rng(seed)
    t = random_acyclic_path(rng, max_edges=10)
    ball = Ball(np.zeros(2), 1.5)
    pt = currents.push_forward(t, BallProjection(ball))
    assert currents.alpha_mass(pt, 0.7) <= currents.alpha_mass(t, 0.7) + 1e-9
    for v in pt.vertices:
        assert np.linalg.norm(v - ball.center) <= ball.radius + 1e-9


def test_push_forward_preserves_boundary_image():
    t = currents.from_segments([seg(-2, 0, 2, 0, 1.0)])
    ball = Ball(np.zeros(2), 1.0)
    pt = currents.push_forward(t, BallProjection(ball))
    bnd = currents.boundary(pt)
    assert bnd.mass_at([1.0, 0.0]) == pytest.approx(1.0)
    assert bnd.mass_at([-1.0, 0.0]) == pytest.approx(-1.0)
