import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gamma

from orthosteklov.bodies import (Box, CrossPolytope, Polygon, anisotropic_perimeter, ball_perimeter,
                                 ball_shape_functional, ball_volume, boundary_momentum, boundary_p_center,
                                 coordinate_moments, coordinate_upper_bound, l1_diameter, l1_widths,
                                 lp_ball_polygon, make_ball, random_polygon, regular_polygon,
                                 shape_functional, sigma_infty, summarize, volume)
from orthosteklov.errors import DomainError, UnsupportedConfigurationError
from orthosteklov.lp_core import dual_exponent, lp_norm_rows
from orthosteklov.segment import power_integral

seeds = st.integers(0, 10_000)


def quad_momentum(poly, p):
    """Independent oracle: tanh-sinh quadrature of ||x||_p^p along each edge,
    split where a coordinate changes sign."""
    q = dual_exponent(p)
    total = mp.mpf(0)
    for a, e in zip(poly.vertices, poly.edge_vectors):
        cuts = [0.0, 1.0]
        for i in range(2):
            if e[i] != 0 and 0 < -a[i] / e[i] < 1:
                cuts.append(-a[i] / e[i])
        rho_len = float(lp_norm_rows(e[None, :], q)[0])
        f = lambda t: abs(a[0] + t * e[0]) ** p + abs(a[1] + t * e[1]) ** p
        total += rho_len * mp.quad(f, sorted(cuts))
    return float(total)


class TestConstruction:
    def test_balls(self):
        sq = make_ball(math.inf, 2)
        assert volume(sq) == 4.0
        cr = make_ball(1, 2)
        assert sorted(map(tuple, cr.vertices)) == sorted([(1, 0), (0, 1), (-1, 0), (0, -1)])
        assert volume(cr) == 2.0
        assert volume(make_ball(1, 3)) == pytest.approx(4 / 3, rel=1e-15)

    def test_pyramid_decomposition_oracle(self):
        # 2^N orthant simplices of volume 1/N!
        for N in range(2, 7):
            assert volume(CrossPolytope(N)) == pytest.approx(2 ** N / math.factorial(N), rel=1e-14)

    def test_unsupported_ball(self):
        with pytest.raises(UnsupportedConfigurationError):
            make_ball(3, 3)

    def test_invalid_polygons(self):
        with pytest.raises(DomainError):
            Polygon([[0, 0], [1, 0]])
        with pytest.raises(DomainError):
            Polygon([[0, 0], [1, 0], [2, 0], [1, 1]])  # collinear
        with pytest.raises(DomainError):
            Polygon([[0, 0], [1, 1], [1, 0], [0, 1]])  # self-intersecting

    def test_clockwise_is_reoriented(self):
        p = Polygon([[0, 0], [0, 1], [1, 1], [1, 0]])
        assert volume(p) == 1.0

    def test_random_polygon_deterministic(self):
        a, b = random_polygon(7), random_polygon(7)
        assert np.array_equal(a.vertices, b.vertices)
        assert volume(a) >= 1e-3


class TestVolumePerimeter:
    def test_examples(self, square):
        assert volume(Box([1, 1, 1])) == 8.0
        assert volume(Polygon([[0, 0], [1, 0], [0, 1]])) == 0.5
        assert volume(regular_polygon(6)) == pytest.approx(1.5 * math.sqrt(3), rel=1e-14)
        assert anisotropic_perimeter(square, 2) == 8.0
        assert anisotropic_perimeter(make_ball(1, 2), 1) == pytest.approx(4.0, rel=1e-15)
        assert anisotropic_perimeter(make_ball(1, 2), math.inf) == pytest.approx(8.0, rel=1e-15)

    @pytest.mark.parametrize("p", [1, math.inf])
    @pytest.mark.parametrize("N", [2, 3, 4])
    def test_exact_balls_perimeter_is_N_volume(self, p, N):
        b = make_ball(p, N)
        assert anisotropic_perimeter(b, p) == pytest.approx(N * volume(b), rel=1e-14)
        assert volume(b) == pytest.approx(ball_volume(p, N), rel=1e-14)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 5.0])
    def test_gamma_reference_against_refined_polygons(self, p):
        # inscribed polygons converge at O(n^-2); Richardson removes the leading term
        a1 = volume(lp_ball_polygon(p, 1.0, 1024))
        a2 = volume(lp_ball_polygon(p, 1.0, 2048))
        rich = (4 * a2 - a1) / 3
        assert rich == pytest.approx(ball_volume(p, 2), rel=1e-7)
        assert abs(a2 - ball_volume(p, 2)) < abs(a1 - ball_volume(p, 2))
        P = anisotropic_perimeter(lp_ball_polygon(p, 1.0, 2048), p)
        assert P == pytest.approx(ball_perimeter(p, 2), rel=1e-5)

    def test_disk_reference(self):
        assert ball_volume(2, 2) == pytest.approx(math.pi, rel=1e-15)
        assert ball_volume(2, 3) == pytest.approx(4 * math.pi / 3, rel=1e-15)


class TestMomentum:
    def test_square_examples(self, square):
        # edge x = 1: int_{-1}^{1} (1 + y^2) dy = 8/3, four edges
        assert boundary_momentum(square, 2) == pytest.approx(32 / 3, rel=1e-14)
        centered = Polygon([[-.5, -.5], [.5, -.5], [.5, .5], [-.5, .5]])
        assert boundary_momentum(centered, 2) == pytest.approx(4 / 3, rel=1e-14)

    def test_W_inf_momentum_dominates_perimeter(self):
        # ||x||_p >= ||x||_inf = 1 on the boundary of W_inf
        sq = make_ball(math.inf, 2)
        assert boundary_momentum(sq, 8) >= anisotropic_perimeter(sq, 8)

    @settings(max_examples=40)
    @given(seeds, st.sampled_from([1.5, 2.0, 3.0, 7.5, 20.0]))
    def test_closed_form_against_quadrature(self, seed, p):
        poly = random_polygon(seed)
        assert boundary_momentum(poly, p) == pytest.approx(quad_momentum(poly, p), rel=1e-12)

    @pytest.mark.parametrize("p", [1.5, 3.0, 6.0])
    def test_equals_perimeter_on_ball(self, p):
        poly = lp_ball_polygon(p, 1.0, 2048)
        assert boundary_momentum(poly, p) == pytest.approx(anisotropic_perimeter(poly, p), rel=1e-5)

    @pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
    def test_octahedron_facet_oracle(self, p):
        # one facet x+y+z=1 in the positive orthant, |x|^p over it by dblquad
        f, _ = integrate.dblquad(lambda y, x: x ** p, 0, 1, 0, lambda x: 1 - x, epsabs=1e-13, epsrel=1e-13)
        rho = 3 ** (1 - 1 / p) / math.sqrt(3)
        per = 8 * math.sqrt(3) * f * rho
        assert coordinate_moments(CrossPolytope(3), p) == pytest.approx([per] * 3, rel=1e-10)

    @pytest.mark.parametrize("p", [1.5, 2.0, 5.0])
    def test_box_against_polygon_path(self, p):
        b = Box([0.7, 1.3], center=[0.2, -0.1])
        assert coordinate_moments(b, p) == pytest.approx(coordinate_moments(b.to_polygon(), p), rel=1e-13)

    def test_box_3d_oracle(self):
        # centered unit cube faces: x-faces contribute |1/2|^p * 1 each
        p = 2.0
        b = Box([0.5, 0.5, 0.5])
        per = 2 * 0.5 ** p + 4 * (2 * 0.5 ** (p + 1) / (p + 1))
        assert coordinate_moments(b, p) == pytest.approx([per] * 3, rel=1e-14)


class TestDiameterAndCenter:
    def test_examples(self, unit_square):
        assert l1_diameter(make_ball(1, 2)) == 2.0
        assert l1_diameter(CrossPolytope(5)) == 2.0
        assert l1_diameter(Box([1, 1, 1, 1])) == 8.0
        assert sigma_infty(Box([1, 1, 1])) == pytest.approx(1 / 3, rel=1e-15)
        assert l1_diameter(unit_square) == 2.0
        assert sigma_infty(make_ball(1, 2)) == 1.0

    @given(seeds)
    def test_vertex_pairs_match_dense_sampling(self, seed):
        poly = random_polygon(seed)
        t = np.linspace(0, 1, 201)
        pts = (poly.vertices[:, None, :] + t[None, :, None] * poly.edge_vectors[:, None, :]).reshape(-1, 2)
        dense = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2).max()
        assert l1_diameter(poly) == pytest.approx(dense, abs=1e-9)

    def test_center_examples(self, square, unit_square):
        assert np.allclose(boundary_p_center(square, 3.0), 0, atol=1e-12)
        assert np.allclose(boundary_p_center(unit_square, 2.0), [0.5, 0.5], atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_triangle_center_residual(self, seed):
        rng = np.random.default_rng(seed)
        poly = Polygon(rng.uniform(-1, 1, (3, 2)))
        c = boundary_p_center(poly, 3.0)
        q = poly.translate(-c)
        w = lp_norm_rows(q.edge_vectors, dual_exponent(3.0))
        v, e = q.vertices, np.roll(q.vertices, -1, axis=0)
        for i in range(2):
            res = float(np.dot(w, power_integral(v[:, i], e[:, i], 2.0, odd=True)))
            scale = float(np.dot(w, power_integral(v[:, i], e[:, i], 2.0)))
            assert abs(res) < 1e-10 * scale


class TestBoundsAndShape:
    def test_unit_square_coordinate_bound(self, unit_square):
        ub = coordinate_upper_bound(unit_square, 2.0)
        assert ub.bound == pytest.approx(1.5, rel=1e-13)
        assert ub.per_coordinate == pytest.approx(1.5, rel=1e-13)

    @pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
    def test_ball_shape_functional(self, p):
        ref = ball_shape_functional(p, 2)
        assert ref == pytest.approx(ball_volume(p, 2) ** (-p / 2), rel=1e-15)
        approx = shape_functional(lp_ball_polygon(p, 1.0, 2048), p)
        assert approx == pytest.approx(ref, rel=1e-5)

    def test_ineq_easy_identity(self):
        for p in (1.5, 2.0, 3.0):
            poly = lp_ball_polygon(p, 1.0, 4096)
            assert 2 * volume(poly) / boundary_momentum(poly, p) == pytest.approx(1.0, rel=1e-6)

    @given(seeds, st.sampled_from([1.5, 2.0, 3.0, 5.0]))
    def test_shape_functional_inequality(self, seed, p):
        assert shape_functional(random_polygon(seed), p) >= ball_shape_functional(p, 2) - 1e-9

    def test_summary_fields(self):
        s = summarize(make_ball(math.inf, 2), 2)
        assert (s.volume, s.diam1, s.sigma_infty) == (4.0, 4.0, 0.5)
        assert s.shape_Ip == pytest.approx(s.momentum_p / (s.perimeter_p * s.volume), rel=1e-15)
        assert summarize(make_ball(1, 2), math.inf).momentum_p is None


@given(seeds, st.sampled_from([0.5, 2.0, 3.7]), st.sampled_from([1.5, 2.0, 3.0]))
def test_scaling_laws(seed, t, p):
    P = random_polygon(seed)
    Q = P.scale(t)
    N = 2
    assert volume(Q) == pytest.approx(t ** N * volume(P), rel=1e-12)
    assert anisotropic_perimeter(Q, p) == pytest.approx(t ** (N - 1) * anisotropic_perimeter(P, p), rel=1e-12)
    assert boundary_momentum(Q, p) == pytest.approx(t ** (p + N - 1) * boundary_momentum(P, p), rel=1e-11)
    assert l1_diameter(Q) == pytest.approx(t * l1_diameter(P), rel=1e-12)
    assert shape_functional(Q, p) == pytest.approx(shape_functional(P, p), rel=1e-9)
    ub_p, ub_q = coordinate_upper_bound(P, p).bound, coordinate_upper_bound(Q, p).bound
    assert ub_q == pytest.approx(t ** (1 - p) * ub_p, rel=1e-9)


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_translation_invariance(seed, dx, dy):
    P = random_polygon(seed)
    Q = P.translate([dx, dy])
    for f in (volume, l1_diameter, lambda b: anisotropic_perimeter(b, 2.5)):
        assert f(Q) == pytest.approx(f(P), abs=1e-12 * (1 + abs(f(P))))
    assert shape_functional(Q, 3.0) == pytest.approx(shape_functional(P, 3.0), rel=1e-9)


@given(seeds)
def test_reflection_and_swap_invariance(seed):
    P = random_polygon(seed)
    for A in ([[0, 1], [1, 0]], [[-1, 0], [0, 1]], [[1, 0], [0, -1]]):
        Q = P.transform(A)
        assert volume(Q) == pytest.approx(volume(P), rel=1e-12)
        assert anisotropic_perimeter(Q, 3) == pytest.approx(anisotropic_perimeter(P, 3), rel=1e-12)
        assert l1_diameter(Q) == pytest.approx(l1_diameter(P), rel=1e-12)
        assert shape_functional(Q, 2.5) == pytest.approx(shape_functional(P, 2.5), rel=1e-9)


def test_l1_width_of_cross_polygon_is_constant():
    w = l1_widths(make_ball(1, 2))
    assert np.allclose(w, 2.0, rtol=1e-12)
    assert not np.allclose(l1_widths(make_ball(math.inf, 2)), 4.0)
