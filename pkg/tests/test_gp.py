import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heatgp.geometry import Circle, Euclidean
from heatgp.gp import (
    Dataset,
    NumericalError,
    _cholesky,
    apply_transform,
    build_covariance,
    fit,
    fit_rbf,
    hermitian_coordinates,
    hermitian_projector,
    log_marginal_likelihood,
    predict,
    projector_embedding,
    rbf_embedding_baseline,
    repair_psd,
    rmse,
    write_predictions_csv,
)
from heatgp.heatkernel import DistanceProfile, ExactKernel, NoHitsError
from heatgp.matman import ComplexProjective


def dense_gp(Kxx, Kxs, Kss, y, noise_var):
    """Textbook posterior with explicit inverses and a centered prior."""
    ybar = y.mean()
    A = np.linalg.inv(Kxx + noise_var * np.eye(len(y)))
    return ybar + Kxs.T @ A @ (y - ybar), Kss - Kxs.T @ A @ Kxs


@pytest.fixture
def line_data(rng):
    X = np.sort(rng.uniform(-3, 3, 12))[:, None]
    y = np.sin(X[:, 0]) + 0.1 * rng.standard_normal(12)
    return Dataset(Euclidean(1), X, y)


class TestCovariance:
    def test_single_location(self):
        K = build_covariance(ExactKernel(Euclidean(2), 1.0), np.zeros((1, 2)), 2.5)
        assert K.shape == (1, 1) and K[0, 0] == pytest.approx(2.5 / (2 * math.pi))

    def test_closed_form_is_rbf(self):
        X = np.arange(6.0)[:, None]
        P = ExactKernel(Euclidean(1), 0.7).matrix(X, X)
        rbf = (2 * math.pi * 0.7) ** -0.5 * np.exp(-((X - X.T) ** 2) / 1.4)
        np.testing.assert_allclose(P, rbf, rtol=1e-14)
        assert repair_psd(P)[1] is False
        np.testing.assert_array_equal(build_covariance(ExactKernel(Euclidean(1), 0.7), X, 3.0), 3.0 * P)

    def test_repair_single_negative(self, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        w = np.array([-1e-3, 0.5, 1.0, 1.5, 2.0, 3.0])
        S = (Q * w) @ Q.T
        R, repaired = repair_psd(S)
        assert repaired
        assert np.linalg.eigvalsh(R).min() >= 0
        off = ~np.eye(6, dtype=bool)
        assert np.max(np.abs((R - S)[off])) <= 1e-3

    def test_repair_idempotent(self, rng):
        G = rng.standard_normal((8, 8))
        S = G + G.T
        R, _ = repair_psd(S)
        R2, again = repair_psd(R)
        assert not again
        assert np.max(np.abs(R2 - R)) <= 1e-12

    def test_rejects_bad_signal_var(self):
        with pytest.raises(ValueError):
            build_covariance(ExactKernel(Euclidean(1), 1.0), np.zeros((1, 1)), 0.0)

    def test_lml_matches_scipy(self, rng):
        from scipy.stats import multivariate_normal

        G = rng.standard_normal((5, 5))
        K = G @ G.T + np.eye(5)
        y = rng.standard_normal(5)
        assert log_marginal_likelihood(K, y) == pytest.approx(multivariate_normal(cov=K).logpdf(y))
        assert log_marginal_likelihood(-K, y) == -math.inf

    def test_cholesky_failure(self):
        with pytest.raises(NumericalError):
            _cholesky(np.diag([1.0, -1.0]))


class TestPrediction:
    def test_dense_oracle(self, line_data, rng):
        kern = ExactKernel(Euclidean(1), 0.8)
        model = fit(line_data, kern, signal_var=2.0, noise_var=0.05)
        Xs = rng.uniform(-4, 4, 7)[:, None]
        X = line_data.locations
        mean, cov = predict(model, Xs)
        m_ref, c_ref = dense_gp(2 * kern.matrix(X, X), 2 * kern.matrix(X, Xs), 2 * kern.matrix(Xs, Xs),
                                line_data.responses, 0.05)
        np.testing.assert_allclose(mean, m_ref, atol=1e-8)
        np.testing.assert_allclose(cov, c_ref, atol=1e-8)
        _, var = predict(model, Xs, full_cov=False)
        np.testing.assert_allclose(var, np.diag(cov), atol=1e-12)

    def test_interpolation(self, rng):
        X = np.linspace(-3, 3, 8)[:, None]
        y = rng.standard_normal(8)
        model = fit(Dataset(Euclidean(1), X, y), ExactKernel(Euclidean(1), 0.3), signal_var=1.5, noise_var=0.0)
        mean, var = predict(model, X, full_cov=False)
        np.testing.assert_allclose(mean, y, atol=1e-6)
        assert np.all(var <= 1e-6 * 1.5)

    def test_prior_reversion(self, line_data):
        kern = ExactKernel(Euclidean(1), 0.5)
        model = fit(line_data, kern, signal_var=2.0, noise_var=0.1)
        mean, var = predict(model, np.array([[60.0]]), full_cov=False)
        assert mean[0] == pytest.approx(line_data.responses.mean(), abs=1e-12)
        assert var[0] == pytest.approx(2.0 * kern(0.0), rel=1e-12)

    def test_linear_in_y(self, line_data, rng):
        kern = ExactKernel(Euclidean(1), 0.5)
        X = line_data.locations
        y1, y2 = rng.standard_normal((2, len(X)))
        Xs = rng.uniform(-3, 3, 9)[:, None]
        m = [predict(fit(Dataset(Euclidean(1), X, y), kern, signal_var=1.0, noise_var=0.2), Xs)[0]
             for y in (y1, y2, y1 + y2)]
        np.testing.assert_allclose(m[2], m[0] + m[1], atol=1e-10)

    def test_variance_below_prior(self, line_data, rng):
        kern = ExactKernel(Euclidean(1), 0.5)
        model = fit(line_data, kern)
        Xs = rng.uniform(-4, 4, 20)[:, None]
        _, cov = predict(model, Xs)
        assert np.all(np.diag(cov) <= model.signal_var * kern(0.0) + 1e-10)
        np.testing.assert_array_equal(cov, cov.T)

    def test_shrinkage_with_noise(self, line_data):
        kern = ExactKernel(Euclidean(1), 0.5)
        Xs = np.linspace(-3, 3, 15)[:, None]
        norms = []
        for s_n in (1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0):
            m, _ = predict(fit(line_data, kern, signal_var=1.0, noise_var=s_n), Xs)
            norms.append(np.linalg.norm(m - line_data.responses.mean()))
        assert np.all(np.diff(norms) < 0)


class TestFit:
    def test_recovers_generating_t(self, rng):
        c = Circle()
        X = np.linspace(0, c.L, 60, endpoint=False)[:, None]
        grid = [0.05, 0.2, 0.8, 3.2]
        kernels = {t: ExactKernel(c, t) for t in grid}
        P = kernels[0.8].matrix(X, X)
        y = np.linalg.cholesky(P + 1e-10 * np.eye(60)) @ rng.standard_normal(60)
        model = fit(Dataset(c, X, y), kernels)
        assert model.t == 0.8
        assert model.lml == max(model.lml_by_t.values())

    def test_duplicate_conflicting(self):
        X = np.zeros((2, 1))
        gap = 1.0
        model = fit(Dataset(Euclidean(1), X, [0.0, gap]), ExactKernel(Euclidean(1), 1.0))
        # centered y is (-g/2, g/2): the (1, -1) eigen-direction carries g^2/2 with
        # eigenvalue s_n, the (1, 1) direction carries nothing, so s_h -> 0 and the
        # likelihood -g^2/(4 s_n) - log s_n peaks at s_n = g^2/4
        assert model.noise_var >= 0.5 * np.var([0.0, gap])
        assert model.noise_var == pytest.approx(gap**2 / 4, rel=1e-3)

    def test_skips_no_hit_times(self):
        e = Euclidean(1)
        X = np.array([[0.0], [1.0], [2.0]])
        d0 = np.array([0.0, 1.0, 2.0])
        good = DistanceProfile(e, 1.0, d0, np.array([0.4, 0.24, 0.05]), np.full(3, 0.01), np.array([50, 30, 5]), 100, 0.1)
        bad = DistanceProfile(e, 0.1, d0, np.array([1.2, 0.0, 0.0]), np.full(3, 0.01), np.array([50, 0, 0]), 100, 0.1)
        model = fit(Dataset(e, X, [1.0, 0.5, -0.2]), {0.1: bad, 1.0: good})
        assert model.t == 1.0 and 0.1 in model.skipped
        with pytest.raises(NoHitsError):
            fit(Dataset(e, X, [1.0, 0.5, -0.2]), {0.1: bad})

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            fit(Dataset(Euclidean(1), np.zeros((1, 1)), [1.0]), ExactKernel(Euclidean(1), 1.0))

    def test_summary(self, line_data):
        s = fit(line_data, {0.5: ExactKernel(Euclidean(1), 0.5)}).summary()
        assert s["n_train"] == 12 and s["kernel"]["type"] == "ExactKernel"

    def test_dataset_validation(self):
        with pytest.raises(ValueError, match="responses"):
            Dataset(Euclidean(1), np.zeros((3, 1)), [1.0, 2.0])
        with pytest.raises(ValueError):
            Dataset(Euclidean(2), np.zeros((3, 1)), [1.0, 2.0, 3.0])

    def test_workers_agree(self, line_data):
        kernels = {t: ExactKernel(Euclidean(1), t) for t in (0.2, 0.5, 1.0)}
        a, b = fit(line_data, kernels), fit(line_data, kernels, workers=3)
        assert (a.t, a.signal_var, a.noise_var) == (b.t, b.signal_var, b.noise_var)


class TestRBF:
    def test_identity_embedding_oracle(self, line_data, rng):
        Z = line_data.locations
        model = rbf_embedding_baseline(line_data, lambda X: X, lengthscale=0.7, signal_var=1.3, noise_var=0.02)
        Zs = rng.uniform(-3, 3, (5, 1))
        k = lambda A, B: 1.3 * np.exp(-0.5 * (A - B.T) ** 2 / 0.49)  # noqa: E731
        m_ref, c_ref = dense_gp(k(Z, Z), k(Z, Zs), k(Zs, Zs), line_data.responses, 0.02)
        mean, cov = model.predict(Zs)
        np.testing.assert_allclose(mean, m_ref, atol=1e-8)
        np.testing.assert_allclose(cov, c_ref, atol=1e-8)

    def test_scaled_lengthscale(self, rng):
        Z = rng.uniform(-2, 2, (25, 3))
        y = np.sin(Z[:, 0]) + Z[:, 1] ** 2 + 0.05 * rng.standard_normal(25)
        a = fit_rbf(Z, y)
        b = fit_rbf(Z, y, transform=0.01)
        b2 = fit_rbf(apply_transform(Z, 0.01), y)
        assert b2.lengthscale / a.lengthscale == pytest.approx(0.01, rel=0.1)
        assert b.lengthscale == a.lengthscale  # transform only touches features at predict time

    def test_matrix_transform(self, rng):
        Z = rng.standard_normal((4, 3))
        G = rng.standard_normal((3, 3))
        np.testing.assert_allclose(apply_transform(Z, G), Z @ G.T)
        with pytest.raises(ValueError):
            apply_transform(Z, np.eye(2))


class TestEmbedding:
    def test_projector_properties(self, rng):
        u = ComplexProjective(4).random_point(rng, 50)
        H = hermitian_projector(u)
        assert np.max(np.abs(H - np.conj(np.swapaxes(H, 1, 2)))) <= 1e-12
        np.testing.assert_allclose(np.trace(H, axis1=1, axis2=2), 1.0, atol=1e-12)
        s = np.linalg.svd(H, compute_uv=False)
        assert np.max(s[:, 1:]) <= 1e-12

    def test_coordinates_isometric(self, rng):
        u, v = ComplexProjective(4).random_point(rng, 2)
        zu, zv = projector_embedding(u), projector_embedding(v)
        assert zu.shape == (25,)
        diff = hermitian_projector(u) - hermitian_projector(v)
        assert np.linalg.norm(zu - zv) == pytest.approx(np.linalg.norm(diff), rel=1e-12)

    def test_phase_invariant(self, rng):
        u = ComplexProjective(4).random_point(rng)
        np.testing.assert_allclose(projector_embedding(u), projector_embedding(np.exp(2j) * u), atol=1e-14)

    def test_hermitian_coordinates_real_diag(self):
        H = np.diag([1.0, 2.0]).astype(complex)
        np.testing.assert_array_equal(hermitian_coordinates(H), [1.0, 2.0, 0.0, 0.0])


class TestRMSE:
    def test_perfect(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_offset(self):
        assert rmse(np.arange(5) + 0.3, np.arange(5)) == pytest.approx(0.3, abs=1e-15)

    def test_direct(self, rng):
        p, q = rng.standard_normal((2, 10))
        ref = math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)) / 10)
        assert abs(rmse(p, q) - ref) <= 1e-12

    def test_errors(self):
        with pytest.raises(ValueError):
            rmse([], [])
        with pytest.raises(ValueError):
            rmse([1.0], [1.0, 2.0])


def test_predictions_csv(tmp_path):
    write_predictions_csv(tmp_path / "p.csv", np.array([1.0, 2.0]), np.array([0.1, 0.2]), np.array([1.1, 1.9]))
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["id", "mean", "variance", "truth"] and rows[2][1] == "2.0"


@given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)))
def test_repair_property(G):
    R, _ = repair_psd(G + G.T)
    assert np.linalg.eigvalsh(R).min() >= -1e-10
    np.testing.assert_array_equal(R, R.T)
    R2, _ = repair_psd(R)
    assert np.max(np.abs(R2 - R)) <= 1e-12
