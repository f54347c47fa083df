import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riccilab.geodesics import ball_volume, geodesic, geodesic_distance
from riccilab.geometry import (
    NumericalBreakdown,
    WarpedProfile,
    arclength,
    curvature,
    round_sphere,
    total_volume,
)


def cylinder_window(r=0.7, N=100, edge=0.2):
    """Constant orbit radius ``r`` on ``[edge, 1 - edge]``, spherical caps outside."""
    x = np.linspace(0.0, 1.0, N + 1)
    cap = r * np.sin(np.pi * np.minimum(x, 1 - x)) / math.sin(math.pi * edge)
    psi = np.where((x >= edge) & (x <= 1 - edge), r, cap)
    psi[0] = psi[-1] = 0.0
    phi = np.full_like(x, r * math.pi / math.sin(math.pi * edge))
    return WarpedProfile(3, x, phi, psi)


def smooth_profile(n, a1, a2, b):
    """Even, pole-closed profile perturbing the unit sphere."""
    x = np.linspace(0.0, 1.0, 161)
    psi = np.sin(np.pi * x) * np.exp(a1 * np.cos(2 * np.pi * x) + a2 * np.cos(4 * np.pi * x))
    psi[0] = psi[-1] = 0.0
    phi = np.pi * np.exp(b * np.cos(2 * np.pi * x) + a1 + a2 - b)
    return WarpedProfile(n, x, phi, psi)


profiles = st.builds(smooth_profile, st.integers(3, 6), st.floats(-0.3, 0.3),
                     st.floats(-0.2, 0.2), st.floats(-0.3, 0.3))


class TestProfile:
    def test_rejects_open_pole(self):
        x = np.linspace(0, 1, 51)
        with pytest.raises(ValueError, match="poles"):
            WarpedProfile(3, x, np.ones_like(x), np.sin(np.pi * x) + 0.1)

    def test_rejects_nonpositive_phi(self):
        p = round_sphere(3)
        with pytest.raises(ValueError, match="phi"):
            WarpedProfile(3, p.grid, -p.phi, p.psi)

    def test_rejects_low_dimension(self):
        p = round_sphere(3)
        with pytest.raises(ValueError, match="dimension"):
            WarpedProfile(2, p.grid, p.phi, p.psi)

    def test_sphere_pole_slopes(self):
        south, north = round_sphere(3).pole_slopes()
        assert south == pytest.approx(1.0, abs=1e-8)
        assert north == pytest.approx(-1.0, abs=1e-8)

    def test_arrays_are_read_only(self):
        p = round_sphere(3)
        with pytest.raises(ValueError):
            p.psi[3] = 1.0


class TestArclength:
    def test_unit_phi_is_identity(self):
        x = np.linspace(0, 1, 11)
        p = WarpedProfile(3, x, np.ones_like(x), np.sin(np.pi * x) * (x * (1 - x) > 0))
        np.testing.assert_allclose(arclength(p), x, atol=1e-15)

    def test_constant_phi_scales(self):
        x = np.linspace(0, 1, 11)
        p = WarpedProfile(3, x, np.full_like(x, 2.0), np.sin(np.pi * x) * (x * (1 - x) > 0))
        np.testing.assert_allclose(arclength(p), 2 * x, atol=1e-15)

    def test_sphere_length(self):
        assert arclength(round_sphere(3, 1.0, 200))[-1] == pytest.approx(math.pi, abs=1e-3)


class TestCurvature:
    def test_unit_three_sphere(self):
        c = curvature(round_sphere(3, 1.0, 200))
        np.testing.assert_allclose(c.k_rad, 1.0, atol=1e-8)
        np.testing.assert_allclose(c.k_sph, 1.0, atol=1e-8)
        np.testing.assert_allclose(c.scalar, 6.0, atol=1e-7)
        np.testing.assert_allclose(c.norm_ric, 2 * math.sqrt(3), atol=1e-7)
        np.testing.assert_allclose(c.norm_rm, math.sqrt(12), atol=1e-7)
        assert np.all(c.norm_ric_minus == 0)

    def test_four_sphere_radius_two(self):
        c = curvature(round_sphere(4, 2.0, 200))
        np.testing.assert_allclose(c.scalar, 3.0, atol=1e-7)
        np.testing.assert_allclose(c.norm_rm, math.sqrt(24) / 4, atol=1e-7)

    @pytest.mark.parametrize("n, r", [(3, 1.0), (5, 0.5), (7, 3.0)])
    def test_norm_convention_on_spheres(self, n, r):
        c = curvature(round_sphere(n, r, 200))
        np.testing.assert_allclose(c.norm_rm**2, 2 * n * (n - 1) / r**4, rtol=1e-7)
        np.testing.assert_allclose(c.norm_ric**2, n * (n - 1) ** 2 / r**4, rtol=1e-7)

    def test_cylinder_window(self):
        r = 0.7
        c = curvature(cylinder_window(r))
        inner = slice(30, 71)
        np.testing.assert_allclose(c.k_rad[inner], 0.0, atol=1e-12)
        np.testing.assert_allclose(c.k_sph[inner], 1 / r**2, rtol=1e-12)
        np.testing.assert_allclose(c.ric_rad[inner], 0.0, atol=1e-12)
        np.testing.assert_allclose(c.ric_sph[inner], 1 / r**2, rtol=1e-12)
        np.testing.assert_allclose(c.scalar[inner], 2 / r**2, rtol=1e-12)
        assert np.all(c.norm_ric_minus[inner] <= 1e-12)

    def test_refinement_order(self):
        # sixth-order stencils: measure the order before roundoff takes over
        err = [np.max(np.abs(curvature(round_sphere(3, 1.0, N)).k_sph - 1)) for N in (25, 50, 100)]
        orders = np.log2(np.array(err[:-1]) / np.array(err[1:]))
        assert np.all(orders >= 1.9)
        for N in (100, 200, 400):
            assert np.max(np.abs(curvature(round_sphere(3, 1.0, N)).scalar - 6)) < 1e-7

    def test_breakdown_names_node(self):
        x = np.linspace(0, 1, 51)
        psi = np.sin(np.pi * x)
        psi[0] = psi[-1] = 0.0
        psi[20] = 1e200
        with pytest.raises(NumericalBreakdown) as info:
            curvature(WarpedProfile(3, x, np.full_like(x, np.pi), psi))
        assert info.value.node is not None

    @settings(max_examples=40, deadline=None)
    @given(profiles)
    def test_pointwise_identities(self, p):
        c = curvature(p)
        n = p.n
        np.testing.assert_allclose(c.scalar, c.ric_rad + (n - 1) * c.ric_sph, rtol=1e-12, atol=1e-12)
        assert np.all(c.scalar**2 <= n * c.norm_ric**2 * (1 + 1e-12) + 1e-12)
        assert np.all(c.norm_ric_minus <= c.norm_ric * (1 + 1e-12))

    @settings(max_examples=25, deadline=None)
    @given(profiles)
    def test_scaling(self, p):
        c1, c2 = curvature(p), curvature(p.scaled(2.0))
        for name in ("k_rad", "k_sph", "scalar", "norm_ric", "norm_rm"):
            a, b = getattr(c1, name), getattr(c2, name)
            np.testing.assert_allclose(b, a / 4, rtol=1e-10, atol=1e-12 * np.max(np.abs(a)))


def great_circle(a, b):
    (xa, ta), (xb, tb) = a, b
    pa = np.array([math.sin(math.pi * xa) * math.cos(ta), math.sin(math.pi * xa) * math.sin(ta),
                   math.cos(math.pi * xa)])
    pb = np.array([math.sin(math.pi * xb) * math.cos(tb), math.sin(math.pi * xb) * math.sin(tb),
                   math.cos(math.pi * xb)])
    return math.acos(max(-1.0, min(1.0, float(pa @ pb))))


SPHERE = round_sphere(3, 1.0, 200)
points = st.tuples(st.floats(0.0, 1.0), st.floats(-math.pi, math.pi))


class TestGeodesics:
    def test_same_point(self):
        assert geodesic_distance(SPHERE, (0.3, 0.4), (0.3, 0.4)) == 0.0

    def test_antipodal_poles(self):
        assert geodesic_distance(SPHERE, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(math.pi, abs=1e-3)

    @pytest.mark.parametrize("alpha", [0.1, 1.0, 2.0, 3.0])
    def test_equator(self, alpha):
        d = geodesic_distance(SPHERE, (0.5, 0.0), (0.5, alpha))
        assert d == pytest.approx(alpha, abs=1e-3)

    @settings(max_examples=30, deadline=None)
    @given(points, points)
    def test_matches_great_circles(self, a, b):
        d = geodesic(SPHERE, a, b)
        assert d.length == pytest.approx(great_circle(a, b), abs=1e-3)
        assert geodesic_distance(SPHERE, b, a) == pytest.approx(d.length, abs=1e-9)

    @settings(max_examples=15, deadline=None)
    @given(points, points, points)
    def test_triangle_inequality_on_dumbbell(self, a, b, c):
        from riccilab.flow import Scenario, initial_profile
        p = initial_profile(Scenario(family="dumbbell", grid_n=200))
        ab, bc, ac = (geodesic_distance(p, u, v) for u, v in ((a, b), (b, c), (a, c)))
        assert ac <= ab + bc + 1e-6


class TestBallVolume:
    def test_whole_sphere(self):
        res = ball_volume(SPHERE, (0.5, 0.0), 4.0, full=True)
        assert res.saturated
        assert res.volume == pytest.approx(2 * math.pi**2, rel=1e-2)
        assert ball_volume(SPHERE, (0.0, 0.0), math.pi * 0.999) == pytest.approx(2 * math.pi**2, rel=1e-2)

    @pytest.mark.parametrize("center", [(0.0, 0.0), (0.5, 0.0), (0.3, 1.0)])
    @pytest.mark.parametrize("rho", [0.2, 0.6, 1.5])
    def test_spherical_caps(self, center, rho):
        exact = 2 * math.pi * (rho - math.sin(rho) * math.cos(rho))
        assert ball_volume(SPHERE, center, rho) == pytest.approx(exact, rel=1e-2)

    def test_euclidean_limit(self):
        rho = 1e-2
        assert ball_volume(SPHERE, (0.5, 0.0), rho) / rho**3 == pytest.approx(4 * math.pi / 3, rel=1e-2)

    def test_total_volume_quadrature(self):
        assert total_volume(SPHERE) == pytest.approx(2 * math.pi**2, rel=1e-6)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            ball_volume(SPHERE, (0.5, 0.0), 0.0)
