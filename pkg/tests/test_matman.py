import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate
from scipy.linalg import expm

from heatgp.geometry import ConstraintError
from heatgp.matman import (
    ComplexProjective,
    CutLocusWarning,
    Grassmannian,
    RealProjective,
    SpecialOrthogonal,
    SpecialUnitary,
    Sphere,
    Stiefel,
    Unitary,
    cproj_ball_volume,
    cproj_heat_kernel_series,
    dist_grassmann,
    dist_group,
    dist_projective,
    dist_sphere,
    exp_cproj,
    exp_grassmann,
    exp_group,
    exp_skew,
    exp_sphere,
    exp_stiefel,
    herm,
    legendre_heat_kernel_s2,
    make_manifold,
    orthogonal_complement,
    polar_factor,
    special_orthogonal_completion,
    sphere_cap_volume,
    sphere_volume,
)


def random_skew(rng, n, size=(), complex_=False):
    G = rng.standard_normal(size + (n, n))
    if complex_:
        G = G + 1j * rng.standard_normal(size + (n, n))
    return (G - herm(G)) / 2


def rotation2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


class TestGroupExp:
    def test_zero(self):
        np.testing.assert_array_equal(exp_group(np.eye(3), np.zeros((3, 3))), np.eye(3))

    def test_quarter_turn(self):
        X = np.array([[0, -math.pi / 2], [math.pi / 2, 0]])
        np.testing.assert_allclose(exp_group(np.eye(2), X), [[0, -1], [1, 0]], atol=1e-15)

    @pytest.mark.parametrize("n,complex_", [(4, False), (3, False), (3, True), (5, True)])
    def test_against_expm(self, rng, n, complex_):
        for _ in range(20):
            X = random_skew(rng, n, complex_=complex_)
            assert np.linalg.norm(exp_skew(X) - expm(X)) <= 1e-10

    def test_rejects_non_skew(self):
        with pytest.raises(ConstraintError):
            exp_group(np.eye(2), np.eye(2))

    def test_rodrigues_small_angle(self):
        X = 1e-6 * np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]])
        np.testing.assert_allclose(exp_skew(X), expm(X), atol=1e-17)


class TestGroupDistance:
    def test_identity(self, rng):
        A = SpecialOrthogonal(4).random_point(rng)
        assert dist_group(A, A) == pytest.approx(0.0, abs=1e-12)

    def test_so2_rotation(self):
        lam = np.linalg.eigvals(rotation2(1.0))
        np.testing.assert_allclose(np.sort(np.angle(lam)), [-1.0, 1.0], atol=1e-14)
        assert dist_group(np.eye(2), rotation2(1.0)) == pytest.approx(math.sqrt(2), abs=1e-14)

    def test_so3_round_trip(self, rng):
        X = random_skew(rng, 3)
        X *= 0.7 / np.linalg.norm(X)
        assert dist_group(np.eye(3), exp_group(np.eye(3), X)) == pytest.approx(0.7, abs=1e-9)

    def test_cut_locus_warning(self):
        R = np.diag([-1.0, -1.0, 1.0])
        with pytest.warns(CutLocusWarning):
            d = dist_group(np.eye(3), R)
        assert d == pytest.approx(math.pi * math.sqrt(2))

    def test_bi_invariance(self, rng):
        m = SpecialUnitary(3)
        A, B, C = m.random_point(rng, 3)
        d = dist_group(A, B)
        assert dist_group(C @ A, C @ B) == pytest.approx(d, abs=1e-10)
        assert dist_group(A @ C, B @ C) == pytest.approx(d, abs=1e-10)


class TestStiefel:
    def test_zero_step(self, rng):
        A = Stiefel(2, 5).random_point(rng)
        np.testing.assert_allclose(exp_stiefel(A, np.zeros_like(A)), A, atol=1e-15)

    def test_k1_matches_sphere(self, rng):
        m = Stiefel(1, 4)
        for _ in range(100):
            A = m.random_point(rng)
            D = m.sample_tangent(A, 0.5, rng)
            ref = exp_sphere(A[:, 0], D[:, 0])
            assert np.max(np.abs(exp_stiefel(A, D)[:, 0] - ref)) <= 1e-10

    def test_k_equals_n_matches_group(self, rng):
        m = Stiefel(4, 4)
        for _ in range(50):
            A = SpecialOrthogonal(4).random_point(rng)
            X = random_skew(rng, 4)
            assert np.linalg.norm(exp_stiefel(A, A @ X) - exp_group(A, X)) <= 1e-10
            assert m.residual(exp_stiefel(A, A @ X)) <= 1e-10

    def test_quotient_map_oracle(self, rng):
        # canonical geodesic from A is Q expm([[W, -B^T], [B, 0]]) I_{n,k} with Q = [A A_perp]
        n, k = 5, 2
        m = Stiefel(k, n)
        for _ in range(50):
            A = m.random_point(rng)
            Q = special_orthogonal_completion(A)
            W = random_skew(rng, k)
            B = rng.standard_normal((n - k, k))
            X = np.block([[W, -B.T], [B, np.zeros((n - k, n - k))]])
            ref = (Q @ expm(X))[:, :k]
            D = Q @ np.vstack([W, B])
            assert np.linalg.norm(exp_stiefel(A, D) - ref) <= 1e-10

    def test_complex_constraint(self, rng):
        m = Stiefel(2, 4, "complex")
        A = m.random_point(rng)
        D = m.sample_tangent(A, 0.3, rng)
        assert m.residual(m.exp(A, D)) <= 1e-10

    def test_ball_distance_is_local_isometry(self, rng):
        m = Stiefel(2, 5)
        A = m.random_point(rng)
        D = m.sample_tangent(A, 1.0, rng)
        D *= 1e-3 / m.norm(A, D)
        assert m.ball_distance(A, m.exp(A, D)) == pytest.approx(1e-3, rel=1e-5)

    def test_no_general_distance(self, rng):
        m = Stiefel(2, 4)
        with pytest.raises(NotImplementedError):
            m.dist(m.base_point(), m.base_point())


class TestSphere:
    def test_quarter(self):
        np.testing.assert_allclose(exp_sphere([1.0, 0, 0], [0, math.pi / 2, 0]), [0, 1, 0], atol=1e-15)

    def test_full_loop(self):
        np.testing.assert_allclose(exp_sphere([1.0, 0, 0], [0, 2 * math.pi, 0]), [1, 0, 0], atol=1e-15)

    def test_distances(self):
        assert dist_sphere([1.0, 0], [1.0, 0]) == 0
        assert dist_sphere([1.0, 0], [0, 1.0]) == pytest.approx(math.pi / 2)
        assert dist_sphere([1.0, 0], [-1.0, 0]) == pytest.approx(math.pi)

    def test_round_trip(self, rng):
        m = Sphere(3)
        v = m.random_point(rng, 200)
        w = m.sample_tangent(v, 1.0, rng)
        R = rng.uniform(0, math.pi - 1e-3, 200)
        w *= (R / np.linalg.norm(w, axis=-1))[:, None]
        np.testing.assert_allclose(dist_sphere(v, exp_sphere(v, w)), R, atol=1e-10)


class TestGrassmann:
    def test_zero_step(self, rng):
        Y = Grassmannian(2, 5).random_point(rng)
        assert dist_grassmann(Y, exp_grassmann(Y, np.zeros_like(Y))) <= 1e-7

    def test_k1_matches_sphere(self, rng):
        m = Grassmannian(1, 4)
        for _ in range(50):
            Y = m.random_point(rng)
            D = m.sample_tangent(Y, 0.5, rng)
            ref = exp_sphere(Y[:, 0], D[:, 0])[:, None]
            assert dist_grassmann(exp_grassmann(Y, D), ref) <= 1e-7
            assert dist_projective(exp_grassmann(Y, D)[:, 0], ref[:, 0]) <= 1e-10

    def test_round_trip(self, rng):
        m = Grassmannian(2, 4)
        for _ in range(50):
            Y = m.random_point(rng)
            D = m.sample_tangent(Y, 0.1, rng)
            s = np.linalg.svd(D, compute_uv=False)
            if s.max() >= math.pi / 2:
                continue
            assert dist_grassmann(Y, exp_grassmann(Y, D)) == pytest.approx(np.linalg.norm(s), abs=1e-8)

    def test_same_subspace(self, rng):
        A = Grassmannian(3, 6).random_point(rng)
        Q = SpecialOrthogonal(3).random_point(rng)
        assert dist_grassmann(A, A @ Q) <= 1e-10

    def test_k1_matches_projective(self, rng):
        u, v = Sphere(3).random_point(rng, 2)
        assert dist_grassmann(u[:, None], v[:, None]) == pytest.approx(dist_projective(u, v), abs=1e-14)

    def test_orthogonal_lines(self):
        assert dist_grassmann(np.array([[1.0], [0], [0]]), np.array([[0.0], [1], [0]])) == pytest.approx(math.pi / 2)


class TestProjective:
    def test_zero_step(self):
        v = np.array([1.0, 0.0, 0.0], dtype=complex)
        np.testing.assert_allclose(exp_cproj(v, np.zeros(2)), v)

    def test_quarter_turn(self):
        out = exp_cproj(np.array([1.0, 0.0]), np.array([math.pi / 2]))
        assert dist_projective(out, np.array([0.0, 1.0])) <= 1e-15

    def test_round_trip(self, rng):
        m = ComplexProjective(3)
        for _ in range(100):
            v = m.random_point(rng)
            R = rng.uniform(0, math.pi / 2 - 1e-3)
            eps = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            eps *= R / np.linalg.norm(eps)
            assert dist_projective(v, exp_cproj(v, eps)) == pytest.approx(R, abs=1e-8)

    def test_phase_invariance(self, rng):
        u = ComplexProjective(2).random_point(rng)
        assert dist_projective(u, np.exp(0.7j) * u) <= 1e-15

    def test_orthogonal(self):
        assert dist_projective(np.array([1.0, 0]), np.array([0, 1.0])) == pytest.approx(math.pi / 2)

    def test_real_line_parametrization(self):
        p = lambda th: np.array([math.cos(th), math.sin(th)])
        assert dist_projective(p(0.0), p(math.pi / 3)) == pytest.approx(math.pi / 3, abs=1e-14)


class TestCompletion:
    def test_e1(self):
        C = orthogonal_complement(np.array([1.0, 0, 0]))
        np.testing.assert_allclose(C @ C.T, np.diag([0.0, 1, 1]), atol=1e-15)

    def test_defining_property(self, rng):
        Y = Stiefel(2, 5).random_point(rng)
        C = orthogonal_complement(Y)
        assert np.linalg.norm(Y.T @ C) <= 1e-12
        np.testing.assert_allclose(C.T @ C, np.eye(3), atol=1e-12)

    def test_special_orthogonal(self, rng):
        for _ in range(50):
            A = Stiefel(2, 4).random_point(rng)
            Q = special_orthogonal_completion(A)
            np.testing.assert_allclose(Q.T @ Q, np.eye(4), atol=1e-12)
            assert np.linalg.det(Q) == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(Q[:, :2], A, atol=0)

    def test_polar_rank_deficient(self):
        with pytest.raises(ValueError):
            polar_factor(np.zeros((3, 3)))


class TestVolumes:
    def test_cap_quadrature(self):
        for m in (2, 3, 5):
            area = sphere_volume(m - 1)
            for r in (0.1, 1.0, 2.5, math.pi):
                ref, _ = integrate.quad(lambda s: area * math.sin(s) ** (m - 1), 0, r)
                assert sphere_cap_volume(r, m) == pytest.approx(ref, rel=1e-12)

    def test_full_sphere(self):
        assert sphere_volume(2) == pytest.approx(4 * math.pi)
        assert sphere_cap_volume(math.pi, 2) == pytest.approx(4 * math.pi)

    def test_strip_quadrature_and_mc(self, rng):
        m = Sphere(2)
        d0, eps = math.pi / 2, 0.1
        quad, _ = integrate.quad(lambda s: 2 * math.pi * math.sin(s), d0 - eps, d0 + eps)
        assert m.strip_volume(d0, eps) == pytest.approx(quad, rel=1e-12)
        hits = n = 0
        for _ in range(8):
            g = rng.standard_normal((500000, 3))
            z = g[:, 0] / np.linalg.norm(g, axis=1)
            hits += np.count_nonzero(np.abs(np.arccos(np.clip(z, -1, 1)) - d0) < eps)
            n += g.shape[0]
        assert 4 * math.pi * hits / n == pytest.approx(quad, rel=0.005)

    @pytest.mark.parametrize("mdim", [1, 2, 4])
    def test_cproj_ball_mc(self, rng, mdim):
        m = ComplexProjective(mdim)
        pts = m.random_point(rng, 400000)
        d = dist_projective(m.base_point(), pts)
        for r in (0.3, 0.7, 1.2):
            frac = np.mean(d < r)
            se = math.sqrt(frac * (1 - frac) / d.size)
            assert abs(cproj_ball_volume(r, mdim) / m.volume - frac) <= 4 * se

    def test_rp_ball_volume(self):
        m = RealProjective(2)
        assert m.ball_volume(math.pi / 2) == pytest.approx(m.volume)


class TestSeriesKernels:
    def test_legendre_normalization(self):
        x = np.linspace(0, math.pi, 4001)
        mass = np.trapezoid(legendre_heat_kernel_s2(x, 0.5) * 2 * math.pi * np.sin(x), x)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_cp1_is_half_radius_sphere(self):
        d = np.linspace(0, math.pi / 2, 25)
        for t in (0.05, 0.3, 1.0):
            ref = 4 * legendre_heat_kernel_s2(2 * d, 4 * t, terms=80)
            np.testing.assert_allclose(cproj_heat_kernel_series(d, t, 1), ref, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("mdim", [2, 4])
    def test_cp_normalization(self, mdim):
        d = np.linspace(0, math.pi / 2, 20001)
        dens = 2 * mdim * math.pi**mdim / math.factorial(mdim) * np.sin(d) ** (2 * mdim - 1) * np.cos(d)
        mass = np.trapezoid(cproj_heat_kernel_series(d, 0.2, mdim) * dens, d)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_cp_stationary_limit(self):
        assert cproj_heat_kernel_series(0.4, 50.0, 4) == pytest.approx(24 / math.pi**4, rel=1e-12)


ALL_MANIFOLDS = [
    SpecialOrthogonal(3), SpecialOrthogonal(5), SpecialUnitary(3), Unitary(3),
    Stiefel(1, 4), Grassmannian(2, 5), Grassmannian(2, 4, "complex"), Sphere(2), Sphere(4),
    RealProjective(3), ComplexProjective(3),
]


@pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
def test_exp_preserves_constraint(m, rng):
    X = m.random_point(rng, 200)
    w = m.sample_tangent(X, 1.0, rng)
    w = w / np.maximum(1.0, m.norm(X, w))[(...,) + (None,) * len(m.point_shape)]
    assert np.max(m.residual(m.exp(X, w))) <= 1e-10


@pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
def test_symmetry_and_triangle(m, rng):
    x, y, z = (m.random_point(rng, 1000) for _ in range(3))
    dxy, dyx = m.dist(x, y), m.dist(y, x)
    assert np.max(np.abs(dxy - dyx)) <= 1e-12
    assert np.all(m.dist(x, z) <= dxy + m.dist(y, z) + 1e-9)


def test_representative_invariance(rng):
    g = Grassmannian(2, 5, "complex")
    A, B = g.random_point(rng, 2)
    Q = Unitary(2).random_point(rng)
    assert abs(dist_grassmann(A @ Q, B) - dist_grassmann(A, B)) <= 1e-12
    u, v = RealProjective(3).random_point(rng, 2)
    assert abs(dist_projective(-u, v) - dist_projective(u, v)) <= 1e-12


def test_make_manifold():
    assert isinstance(make_manifold("cp", m=4), ComplexProjective)
    with pytest.raises(ValueError, match="unknown manifold"):
        make_manifold("torus")
    with pytest.raises(ValueError, match="needs parameter"):
        make_manifold("sphere")


unit = arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(lambda a: np.linalg.norm(a) > 0.1)


@given(unit, unit, st.floats(-math.pi, math.pi))
def test_projective_invariance_property(a, b, phase):
    u, v = a / np.linalg.norm(a), b / np.linalg.norm(b)
    d = dist_projective(u, v)
    assert 0 <= d <= math.pi / 2 + 1e-15
    assert abs(dist_projective(np.exp(1j * phase) * u, v) - d) <= 1e-12


@given(unit, arrays(np.float64, 4, elements=st.floats(-1, 1)), st.floats(0.0, 3.0))
def test_sphere_round_trip_property(a, g, R):
    v = a / np.linalg.norm(a)
    w = g - np.dot(g, v) * v
    if np.linalg.norm(w) < 1e-3:
        return
    w *= R / np.linalg.norm(w)
    assert abs(dist_sphere(v, exp_sphere(v, w)) - R) <= 1e-9


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_so2_distance_property(a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutLocusWarning)
        d = dist_group(rotation2(a), rotation2(b))
    diff = abs((b - a + math.pi) % (2 * math.pi) - math.pi)
    assert d == pytest.approx(math.sqrt(2) * diff, abs=1e-7)
