import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riccilab.flow import FlowTrace
from riccilab.geometry import round_sphere
from riccilab.metric_spaces import (
    Correspondence,
    FiniteMetricSpace,
    check_eps_approx,
    distortion_ledger,
    gh_bounds,
    gh_brute_force,
    gh_optimal,
    gh_upper_bound,
    pointed_gh_brute_force,
    radial_correspondence,
    sample_ball,
    space_at,
)


def naive_gh(X, Y):
    """Minimum over every covering relation, by enumeration of all subsets of X x Y."""
    cells = list(itertools.product(range(len(X)), range(len(Y))))
    best = math.inf
    for mask in range(1, 2 ** len(cells)):
        rel = [cells[b] for b in range(len(cells)) if mask >> b & 1]
        if {i for i, _ in rel} != set(range(len(X))) or {j for _, j in rel} != set(range(len(Y))):
            continue
        dis = max(abs(X.dist[i, k] - Y.dist[j, l]) for i, j in rel for k, l in rel)
        best = min(best, 0.5 * dis)
    return best


coords = st.floats(-3.0, 3.0, allow_nan=False)
point_sets = st.lists(st.tuples(coords, coords), min_size=1, max_size=3)
larger_sets = st.lists(st.tuples(coords, coords), min_size=1, max_size=5)


def euclidean(pts):
    return FiniteMetricSpace.from_points(pts)


class TestFiniteMetricSpace:
    @pytest.mark.parametrize("d, match", [
        ([[0, 1]], "square"),
        ([[0, -1], [-1, 0]], "non-negative"),
        ([[1, 1], [1, 0]], "diagonal"),
        ([[0, 1], [2, 0]], "symmetric"),
        ([[0, 1, 5], [1, 0, 1], [5, 1, 0]], "triangle"),
        ([[0, np.inf], [np.inf, 0]], "finite"),
    ])
    def test_rejects(self, d, match):
        with pytest.raises(ValueError, match=match):
            FiniteMetricSpace(np.array(d, float))

    def test_base_range(self):
        with pytest.raises(ValueError, match="base"):
            FiniteMetricSpace(np.zeros((1, 1)), base=1)

    def test_ball_and_scale(self):
        X = FiniteMetricSpace.from_points([0.0, 1.0, 3.0])
        assert X.ball(2.0).tolist() == [0, 1]
        assert X.scaled(2.0).diameter == 6.0
        assert X.labels == ("0.0", "1.0", "3.0")


class TestCorrespondence:
    def test_must_cover(self):
        with pytest.raises(ValueError, match="cover"):
            Correspondence([(0, 0)]).validate(2, 1)

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="outside"):
            Correspondence([(0, 0), (1, 3)]).validate(2, 1)


class TestUpperBound:
    def test_identity_is_zero(self):
        X = FiniteMetricSpace.from_points([0.0, 1.0, 2.5])
        assert gh_upper_bound(X, X, Correspondence.identity(3)) == 0.0

    def test_two_point_spaces(self):
        X, Y = FiniteMetricSpace.from_points([0, 1]), FiniteMetricSpace.from_points([0, 1.5])
        assert gh_upper_bound(X, Y, Correspondence.identity(2)) == 0.25
        assert gh_brute_force(X, Y) == 0.25

    @settings(max_examples=30, deadline=None)
    @given(larger_sets, st.floats(1.0, 3.0))
    def test_scaled_identity(self, pts, c):
        X = euclidean(pts)
        ub = gh_upper_bound(X, X.scaled(c), Correspondence.identity(len(X)))
        assert ub == pytest.approx(0.5 * (c - 1) * X.diameter, abs=1e-12)


class TestBruteForce:
    def test_point_versus_space(self):
        X = FiniteMetricSpace.from_points([0.0, 2.0, 5.0])
        assert gh_brute_force(FiniteMetricSpace(np.zeros((1, 1))), X) == 2.5

    def test_guard(self):
        big = FiniteMetricSpace.from_points(np.arange(6.0))
        with pytest.raises(ValueError):
            gh_brute_force(big, big)

    @settings(max_examples=40, deadline=None)
    @given(point_sets, point_sets)
    def test_matches_enumeration(self, a, b):
        X, Y = euclidean(a), euclidean(b)
        assert gh_brute_force(X, Y) == pytest.approx(naive_gh(X, Y), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(larger_sets, larger_sets)
    def test_symmetric_and_bounded(self, a, b):
        X, Y = euclidean(a), euclidean(b)
        d, corr = gh_optimal(X, Y)
        corr.validate(len(X), len(Y))
        assert gh_upper_bound(X, Y, corr) == pytest.approx(d, abs=1e-12)
        assert gh_brute_force(Y, X) == pytest.approx(d, abs=1e-12)
        assert d >= 0.5 * abs(X.diameter - Y.diameter) - 1e-12
        assert gh_upper_bound(X, Y, radial_correspondence(X, Y)) >= d - 1e-12

    @settings(max_examples=30, deadline=None)
    @given(larger_sets, larger_sets, larger_sets)
    def test_triangle_inequality(self, a, b, c):
        X, Y, Z = euclidean(a), euclidean(b), euclidean(c)
        assert gh_brute_force(X, Z) <= gh_brute_force(X, Y) + gh_brute_force(Y, Z) + 1e-12


class TestPointed:
    def test_equal_spaces(self):
        X = FiniteMetricSpace.from_points([0.0, 1.0, 3.0])
        assert pointed_gh_brute_force(X, X) == 0.0

    def test_far_points_ignored(self):
        # the spaces differ only at distance 100 from the base
        X = FiniteMetricSpace.from_points([0.0, 1.0, 100.0])
        Y = FiniteMetricSpace.from_points([0.0, 1.0, 120.0])
        assert gh_brute_force(X, Y) == 10.0
        assert pointed_gh_brute_force(X, Y) <= 0.01

    @settings(max_examples=30, deadline=None)
    @given(larger_sets, larger_sets)
    def test_symmetric(self, a, b):
        X, Y = euclidean(a), euclidean(b)
        p = pointed_gh_brute_force(X, Y)
        assert p >= 0
        assert pointed_gh_brute_force(Y, X) == pytest.approx(p, abs=1e-12)


class TestEpsApprox:
    def test_identity_passes(self):
        X = FiniteMetricSpace.from_points([0.0, 0.5, 1.0])
        rep = check_eps_approx([0, 1, 2], X, X, 0.1)
        assert rep.passed and bool(rep)
        assert rep.base_gap == rep.cover_gap == rep.distortion_gap == 0.0

    def test_wrong_base(self):
        X = FiniteMetricSpace.from_points([0.0, 0.5, 1.0])
        rep = check_eps_approx([1, 1, 2], X, X, 0.1)
        assert not rep.base and rep.base_gap == 0.5

    def test_distortion_and_cover(self):
        X = FiniteMetricSpace.from_points([0.0, 0.5])
        Y = FiniteMetricSpace.from_points([0.0, 0.7, 1.0])
        rep = check_eps_approx([0, 1], X, Y, 0.5)
        assert rep.base and rep.distortion_gap == pytest.approx(0.2)
        assert rep.cover_gap == pytest.approx(0.3)
        assert rep.passed
        assert not check_eps_approx([0, 1], X, Y, 0.25).passed

    def test_bad_input(self):
        X = FiniteMetricSpace.from_points([0.0, 1.0])
        with pytest.raises(ValueError):
            check_eps_approx([0, 1], X, X, 0.0)
        with pytest.raises(ValueError):
            check_eps_approx([0, 2], X, X, 0.1)


SPHERE = round_sphere(3, 1.0, 100)


class TestSampling:
    def test_single_point(self):
        X = sample_ball(SPHERE, (0.5, 0.0), 0.5, 1)
        assert len(X) == 1 and not X.truncated

    def test_whole_sphere(self):
        X = sample_ball(SPHERE, (0.5, 0.0), math.pi, 20)
        assert len(X) == 20
        assert X.dist[0].max() <= math.pi + 1e-3
        assert X.diameter <= math.pi + 1e-3

    def test_deterministic(self):
        a = sample_ball(SPHERE, (0.3, 0.2), 0.6, 6)
        b = sample_ball(SPHERE, (0.3, 0.2), 0.6, 6)
        np.testing.assert_array_equal(a.dist, b.dist)
        assert a.labels == b.labels

    def test_truncated(self):
        X = sample_ball(SPHERE, (0.5, 0.0), 0.05, 50)
        assert X.truncated and len(X) < 50

    def test_space_at_is_metric(self):
        X = space_at(SPHERE, [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)])
        assert X.dist[0, 2] == pytest.approx(math.pi, abs=1e-3)
        assert X.dist[0, 1] == pytest.approx(math.pi / 2, abs=1e-3)


class TestBounds:
    def test_exact_when_small(self):
        X = FiniteMetricSpace.from_points([0.0, 1.0, 2.0])
        Y = FiniteMetricSpace.from_points([0.0, 1.0, 2.5])
        lo, hi = gh_bounds(X, Y)
        assert lo == hi == gh_brute_force(X, Y)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(coords, min_size=6, max_size=10), st.lists(coords, min_size=6, max_size=10))
    def test_ordered_when_large(self, a, b):
        X, Y = FiniteMetricSpace.from_points(a), FiniteMetricSpace.from_points(b)
        lo, hi = gh_bounds(X, Y)
        assert lo == 0.5 * abs(X.diameter - Y.diameter)
        assert lo <= hi


class TestLedger:
    def test_static_trace(self):
        p0, p1 = round_sphere(3, 1.0, 100, 0.0), round_sphere(3, 1.0, 100, 0.1)
        tr = FlowTrace.from_profiles([p0, p1])
        led = distortion_ledger(tr, [((0.0, 0.0), (1.0, 0.0)), ((0.25, 0.0), (0.5, 1.0))])
        assert len(led.rows) == 2 and led.passed
        for row in led.rows:
            assert row.log_ratio == pytest.approx(0.0, abs=1e-12)
            assert row.int_P == pytest.approx(0.1 * 2 * math.sqrt(3), rel=1e-6)
        assert led.worst_margin == pytest.approx(0.2 * math.sqrt(3), rel=1e-6)

    def test_shrinking_sphere_poles(self, sphere_trace):
        led = distortion_ledger(sphere_trace, [((0.0, 0.0), (1.0, 0.0))], stride=20)
        assert led.passed
        for row in led.rows:
            (a, b) = row.window
            exact = 0.5 * math.log((1 - 4 * a) / (1 - 4 * b))
            assert row.log_ratio == pytest.approx(exact, rel=1e-3, abs=1e-6)

    def test_coincident_pair(self):
        tr = FlowTrace.from_profiles([round_sphere(3, 1.0, 100, 0.0), round_sphere(3, 1.0, 100, 0.1)])
        with pytest.raises(ValueError, match="distinct"):
            distortion_ledger(tr, [((0.3, 0.0), (0.3, 0.0))])
