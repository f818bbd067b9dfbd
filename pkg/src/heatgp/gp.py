"""Gaussian-process regression with heat-kernel covariances, plus an RBF baseline.

Any object with ``matrix(X1, X2) -> ndarray`` serves as a kernel: distance
profiles, pairwise ball matrices and closed-form kernels all qualify. The GP
prior is N(0, s_h^2 P_t + s_n^2 I) on responses centered by their sample mean.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import pdist

from .geometry import Manifold
from .heatkernel import EstimationError

LOG_2PI = math.log(2 * math.pi)


class NumericalError(ArithmeticError):
    """The covariance could not be factorized even after extra jitter."""


@dataclass(frozen=True)
class Dataset:
    manifold: Manifold
    locations: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.locations, dtype=self.manifold.dtype)
        y = np.asarray(self.responses, dtype=float).reshape(-1)
        if X.shape[1:] != self.manifold.point_shape:
            raise ValueError(f"locations must have shape (n, *{self.manifold.point_shape})")
        if len(X) != len(y):
            raise ValueError(f"{len(X)} locations but {len(y)} responses")
        self.manifold.check(X, tol=1e-8)
        object.__setattr__(self, "locations", X)
        object.__setattr__(self, "responses", y)

    def __len__(self):
        return len(self.responses)


# ---------------------------------------------------------------------------
# covariance construction


def repair_psd(S, jitter_scale: float = 1e-8) -> tuple[np.ndarray, bool]:
    """Symmetrize; if an eigenvalue is negative, clip to zero and add jitter.

    Jitter is ``jitter_scale * trace / n`` on the diagonal. A matrix without
    negative eigenvalues is returned symmetrized but otherwise untouched, which
    makes the repair idempotent.
    """
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    if w[0] >= 0:
        return S, False
    w = np.clip(w, 0.0, None)
    R = (V * w) @ V.T
    R = 0.5 * (R + R.T)
    n = len(S)
    R[np.diag_indices(n)] += jitter_scale * max(np.trace(R), 0.0) / n
    return R, True


def build_covariance(kernel, locations, signal_var: float = 1.0) -> np.ndarray:
    """s_h^2 times the kernel matrix over ``locations``, repaired to be PSD."""
    if not signal_var > 0:
        raise ValueError("signal variance must be positive")
    X = np.asarray(locations)
    P, _ = repair_psd(kernel.matrix(X, X))
    return signal_var * P


def log_marginal_likelihood(K, y) -> float:
    """-1/2 y^T K^-1 y - 1/2 log det K - n/2 log 2 pi; -inf if K is not PD."""
    y = np.asarray(y, dtype=float)
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return -math.inf
    a = linalg.solve_triangular(L, y, lower=True)
    return float(-0.5 * a @ a - np.sum(np.log(np.diag(L))) - 0.5 * len(y) * LOG_2PI)


def _spectral_lml(lam, proj2, s_h, s_n):
    ev = s_h * lam + s_n
    if np.any(ev <= 0):
        return -math.inf
    return float(-0.5 * np.sum(proj2 / ev) - 0.5 * np.sum(np.log(ev)) - 0.5 * len(lam) * LOG_2PI)


def _cholesky(K):
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        n = len(K)
        bump = 1e-6 * max(np.trace(K), 1e-300) / n
        try:
            return np.linalg.cholesky(K + bump * np.eye(n))
        except np.linalg.LinAlgError:
            raise NumericalError("covariance is singular even after added jitter") from None


def _optimize_log(objective, starts, bounds):
    best = None
    for x0 in starts:
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = optimize.minimize(
            objective, x0, method="Nelder-Mead", bounds=bounds,
            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000, "maxfev": 8000},
        )
        if best is None or res.fun < best.fun:
            best = res
    return best


# ---------------------------------------------------------------------------
# heat-kernel GP


@dataclass(frozen=True)
class GPModel:
    kernel: object
    t: float
    signal_var: float
    noise_var: float
    locations: np.ndarray
    y_mean: float
    y_centered: np.ndarray
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    lml: float
    lml_by_t: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    repaired: bool = False

    def summary(self) -> dict:
        return {
            "t": self.t,
            "signal_var": self.signal_var,
            "noise_var": self.noise_var,
            "log_marginal_likelihood": self.lml,
            "lml_by_t": {repr(k): v for k, v in self.lml_by_t.items()},
            "skipped_t": {repr(k): v for k, v in self.skipped.items()},
            "psd_repaired": self.repaired,
            "n_train": int(len(self.y_centered)),
            "kernel": _kernel_meta(self.kernel),
        }


def _kernel_meta(kernel) -> dict:
    meta = {"type": type(kernel).__name__}
    for key in ("manifold", "t", "n_paths", "eps", "delta", "seed"):
        if hasattr(kernel, key):
            v = getattr(kernel, key)
            meta[key] = repr(v) if key == "manifold" else (float(v) if key in ("t", "eps", "delta") else int(v))
    return meta


def _fit_one(P, y, v, signal_var, noise_var):
    lam, V = np.linalg.eigh(P)
    proj2 = (V.T @ y) ** 2
    pbar = max(float(np.mean(np.diag(P))), 1e-300)
    vs = max(v, 1e-300)
    hb = (math.log(1e-4 * vs / pbar), math.log(1e4 * vs / pbar))
    nb = (math.log(1e-8 * vs), math.log(10 * vs))
    if signal_var is not None and noise_var is not None:
        return signal_var, noise_var, _spectral_lml(lam, proj2, signal_var, noise_var)
    if signal_var is not None:
        f = lambda z: -_spectral_lml(lam, proj2, signal_var, math.exp(z[0]))  # noqa: E731
        r = _optimize_log(f, [np.array([math.log(c * vs)]) for c in (0.01, 0.1, 0.5)], [nb])
        return signal_var, math.exp(r.x[0]), -r.fun
    if noise_var is not None:
        f = lambda z: -_spectral_lml(lam, proj2, math.exp(z[0]), noise_var)  # noqa: E731
        r = _optimize_log(f, [np.array([math.log(vs / pbar)])], [hb])
        return math.exp(r.x[0]), noise_var, -r.fun

    def f(z):
        return -_spectral_lml(lam, proj2, math.exp(z[0]), math.exp(z[1]))

    starts = [np.array([math.log(vs / pbar), math.log(c * vs)]) for c in (0.01, 0.1, 0.5)]
    r = _optimize_log(f, starts, [hb, nb])
    return math.exp(r.x[0]), math.exp(r.x[1]), -r.fun


def fit(
    dataset: Dataset,
    kernels,
    *,
    signal_var: float | None = None,
    noise_var: float | None = None,
    workers: int = 1,
) -> GPModel:
    """Maximize the marginal likelihood over a t-grid and (s_h^2, s_n^2).

    ``kernels`` maps diffusion time to kernel (a single kernel is a one-point
    grid). Variances left as None are optimized on a log scale by bounded
    Nelder-Mead. Grid points whose kernel rests on zero-hit entries are
    skipped and recorded; if every grid point is skipped the last error is raised.
    """
    if len(dataset) < 2:
        raise ValueError("need at least 2 observations")
    if not isinstance(kernels, Mapping):
        kernels = {float(getattr(kernels, "t", math.nan)): kernels}
    X = dataset.locations
    y_mean = float(np.mean(dataset.responses))
    y = dataset.responses - y_mean
    v = float(np.var(y)) if np.var(y) > 0 else 1.0

    def evaluate(item):
        t, kern = item
        try:
            P, rep = repair_psd(kern.matrix(X, X))
        except EstimationError as exc:
            return t, None, exc
        return t, (P, rep) + _fit_one(P, y, v, signal_var, noise_var), None

    items = list(kernels.items())
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(evaluate, items))
    else:
        results = [evaluate(it) for it in items]

    lml_by_t, skipped, best, last_exc = {}, {}, None, None
    for t, res, exc in results:
        if exc is not None:
            skipped[t] = str(exc)
            last_exc = exc
            continue
        lml_by_t[t] = res[4]
        if best is None or res[4] > best[1][4]:
            best = (t, res)
    if best is None:
        raise last_exc
    t, (P, rep, s_h, s_n, lml) = best
    K = s_h * P + s_n * np.eye(len(y))
    L = _cholesky(K)
    alpha = linalg.cho_solve((L, True), y)
    return GPModel(
        kernels[t], float(t), float(s_h), float(s_n), X, y_mean, y, L, alpha,
        float(lml), lml_by_t, skipped, rep,
    )


def predict(model: GPModel, locations, full_cov: bool = True):
    """Posterior mean and covariance (or variance vector) at ``locations``."""
    Xs = np.asarray(locations)
    Kxs = model.signal_var * model.kernel.matrix(model.locations, Xs)
    mean = model.y_mean + Kxs.T @ model.alpha
    W = linalg.solve_triangular(model.chol, Kxs, lower=True)
    if full_cov:
        Kss = model.signal_var * model.kernel.matrix(Xs, Xs)
        cov = Kss - W.T @ W
        cov = 0.5 * (cov + cov.T)
        d = np.diag_indices(len(Xs))
        cov[d] = np.maximum(cov[d], 0.0)
        return mean, cov
    kss = model.signal_var * np.array(
        [model.kernel.matrix(Xs[i : i + 1], Xs[i : i + 1])[0, 0] for i in range(len(Xs))]
    )
    return mean, np.maximum(kss - np.sum(W * W, axis=0), 0.0)


# ---------------------------------------------------------------------------
# RBF baseline on embedded coordinates


def rbf_kernel(Z1, Z2, lengthscale: float, signal_var: float = 1.0) -> np.ndarray:
    d2 = np.sum((Z1[:, None, :] - Z2[None, :, :]) ** 2, axis=-1)
    return signal_var * np.exp(-0.5 * d2 / lengthscale**2)


def apply_transform(Z, transform=None) -> np.ndarray:
    """Identity (None), scalar multiple, or linear map ``Z @ G.T``."""
    Z = np.asarray(Z, dtype=float)
    if transform is None:
        return Z
    G = np.asarray(transform, dtype=float)
    if G.ndim == 0:
        return float(G) * Z
    if G.shape != (Z.shape[1], Z.shape[1]):
        raise ValueError(f"transform must be {Z.shape[1]}x{Z.shape[1]}")
    return Z @ G.T


@dataclass(frozen=True)
class RBFModel:
    Z: np.ndarray
    y_mean: float
    lengthscale: float
    signal_var: float
    noise_var: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    lml: float
    embedding: Callable | None = field(default=None, repr=False)
    transform: object = field(default=None, repr=False)

    def features(self, locations):
        Z = np.asarray(locations, dtype=float) if self.embedding is None else self.embedding(locations)
        return apply_transform(Z, self.transform)

    def predict(self, locations, full_cov: bool = True):
        Zs = self.features(locations)
        Kxs = rbf_kernel(self.Z, Zs, self.lengthscale, self.signal_var)
        mean = self.y_mean + Kxs.T @ self.alpha
        W = linalg.solve_triangular(self.chol, Kxs, lower=True)
        if not full_cov:
            return mean, np.maximum(self.signal_var - np.sum(W * W, axis=0), 0.0)
        cov = rbf_kernel(Zs, Zs, self.lengthscale, self.signal_var) - W.T @ W
        cov = 0.5 * (cov + cov.T)
        d = np.diag_indices(len(Zs))
        cov[d] = np.maximum(cov[d], 0.0)
        return mean, cov

    def summary(self) -> dict:
        return {
            "lengthscale": self.lengthscale,
            "signal_var": self.signal_var,
            "noise_var": self.noise_var,
            "log_marginal_likelihood": self.lml,
        }


def fit_rbf(Z, y, *, lengthscale=None, signal_var=None, noise_var=None, embedding=None, transform=None) -> RBFModel:
    """RBF GP on feature vectors; free hyperparameters maximize the marginal likelihood.

    The length-scale search starts at the median pairwise distance and is
    bounded relative to it, so rescaling the features rescales the fitted
    length-scale by the same factor.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    y_mean = float(np.mean(y))
    yc = y - y_mean
    v = float(np.var(yc)) if np.var(yc) > 0 else 1.0
    med = float(np.median(pdist(Z))) if len(Z) > 1 else 1.0
    med = med if med > 0 else 1.0
    D2 = np.sum((Z[:, None, :] - Z[None, :, :]) ** 2, axis=-1)
    n = len(y)

    fixed = {"l": lengthscale, "h": signal_var, "n": noise_var}
    free = [k for k in ("l", "h", "n") if fixed[k] is None]
    bounds_all = {
        "l": (math.log(1e-3 * med), math.log(1e3 * med)),
        "h": (math.log(1e-4 * v), math.log(1e4 * v)),
        "n": (math.log(1e-8 * v), math.log(10 * v)),
    }

    def unpack(z):
        vals = dict(fixed)
        for k, zi in zip(free, z):
            vals[k] = math.exp(zi)
        return vals

    def nlml(z):
        p = unpack(z)
        K = p["h"] * np.exp(-0.5 * D2 / p["l"] ** 2) + p["n"] * np.eye(n)
        val = log_marginal_likelihood(K, yc)
        return -val if math.isfinite(val) else 1e300

    if free:
        inits = {"l": [math.log(med)], "h": [math.log(v)], "n": [math.log(0.01 * v), math.log(0.1 * v)]}
        starts = [np.array([inits[k][0] for k in free])]
        if "n" in free:
            starts.append(np.array([inits[k][-1] for k in free]))
        r = _optimize_log(nlml, starts, [bounds_all[k] for k in free])
        p = unpack(r.x)
    else:
        p = dict(fixed)
    K = p["h"] * np.exp(-0.5 * D2 / p["l"] ** 2) + p["n"] * np.eye(n)
    L = _cholesky(K)
    alpha = linalg.cho_solve((L, True), yc)
    lml = log_marginal_likelihood(K, yc)
    return RBFModel(Z, y_mean, p["l"], p["h"], p["n"], L, alpha, lml, embedding, transform)


def rbf_embedding_baseline(dataset: Dataset, embedding: Callable, transform=None, **kw) -> RBFModel:
    """Extrinsic baseline: RBF GP on ``transform(embedding(x))``."""
    Z = apply_transform(embedding(dataset.locations), transform)
    return fit_rbf(Z, dataset.responses, embedding=embedding, transform=transform, **kw)


# ---------------------------------------------------------------------------
# embeddings and metrics


def hermitian_projector(u) -> np.ndarray:
    """u u^* for unit vectors u (batched over leading axes)."""
    u = np.asarray(u, dtype=complex)
    return u[..., :, None] * np.conj(u[..., None, :])


def hermitian_coordinates(H) -> np.ndarray:
    """Real coordinates of Hermitian matrices, isometric for the Frobenius norm.

    Diagonal entries, then sqrt(2) Re and sqrt(2) Im of the strict upper triangle.
    """
    H = np.asarray(H)
    n = H.shape[-1]
    iu = np.triu_indices(n, 1)
    diag = np.real(np.diagonal(H, axis1=-2, axis2=-1))
    up = H[..., iu[0], iu[1]]
    return np.concatenate([diag, math.sqrt(2) * up.real, math.sqrt(2) * up.imag], axis=-1)


def projector_embedding(u) -> np.ndarray:
    """Embed complex projective points via u -> u u^* in Hermitian coordinates."""
    return hermitian_coordinates(hermitian_projector(u))


def rmse(predictions, truth) -> float:
    p = np.asarray(predictions, dtype=float).reshape(-1)
    q = np.asarray(truth, dtype=float).reshape(-1)
    if p.size == 0:
        raise ValueError("rmse of empty input")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    return float(np.sqrt(np.mean((p - q) ** 2)))


def write_predictions_csv(path, mean, var, truth=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "mean", "variance"] + (["truth"] if truth is not None else []))
        for i in range(len(mean)):
            row = [i, repr(float(mean[i])), repr(float(var[i]))]
            if truth is not None:
                row.append(repr(float(truth[i])))
            w.writerow(row)
