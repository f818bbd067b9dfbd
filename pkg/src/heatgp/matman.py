"""Exponential maps, geodesic distances and the matrix manifolds built on them.

Covers SO(n), SU(n), U(n), spheres, Stiefel and Grassmann manifolds (real or
complex), and real/complex projective spaces. All routines accept stacked
inputs ``(..., n, k)`` and operate elementwise over the leading axes.

Metric conventions
------------------
* Groups use the trace metric tr(X* Y) on the Lie algebra, so the distance
  between I and exp(X) is the Frobenius norm of X. Tangent vectors on groups are
  represented by their Lie-algebra coordinate X (the tangent vector is A X).
* Stiefel manifolds use the canonical metric 1/2 |A* D|^2 + |(I - A A*) D|^2.
* Grassmannians and projective spaces use the quotient metric whose distance is
  the 2-norm of the principal angles.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.linalg import expm
from scipy.special import betainc, eval_jacobi, eval_legendre, gammaln
from scipy.special import beta as beta_fn

from .geometry import (
    TOL_CONSTRAINT,
    Circle,
    ConstraintError,
    Euclidean,
    Kind,
    Manifold,
)

CUT_LOCUS_TOL = 1e-12


class CutLocusWarning(RuntimeWarning):
    """An eigenvalue sits on the branch cut of the principal logarithm."""


def herm(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _fro(a):
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))


def _scale(a):
    return np.maximum(1.0, np.max(np.abs(a), axis=(-2, -1)))


def _complex_normal(rng, shape, sd):
    return sd * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _normal(rng, shape, sd, complex_):
    return _complex_normal(rng, shape, sd) if complex_ else sd * rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# linear algebra helpers


def exp_skew(X):
    """exp(X) for skew-symmetric/skew-Hermitian X through the Hermitian eigensolver.

    iX is Hermitian, so X = V diag(-i mu) V* and exp(X) = V diag(e^{-i mu}) V*.
    Real input gives a real result (imaginary round-off dropped).
    """
    X = np.asarray(X)
    if X.shape[-2:] == (3, 3) and not np.iscomplexobj(X):
        return _rodrigues(X)
    mu, V = np.linalg.eigh(1j * X)
    E = (V * np.exp(-1j * mu)[..., None, :]) @ herm(V)
    return E.real if not np.iscomplexobj(X) else E


def _rodrigues(X):
    """exp(X) = I + sin(th)/th X + (1 - cos th)/th^2 X^2 for real 3x3 skew X, th = |X|_F / sqrt 2."""
    th = np.sqrt(0.5 * np.sum(X**2, axis=(-2, -1)))[..., None, None]
    small = th < 1e-4
    safe = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - th**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a * X + b * (X @ X)


def orthogonal_complement(Y):
    """Orthonormal basis (n, n-k) of the orthogonal complement of span(Y)."""
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    k = Y.shape[-1]
    Q, _ = np.linalg.qr(Y, mode="complete")
    return Q[..., k:]


def special_orthogonal_completion(A):
    """Q = [A A'] in SO(n) with Q I_{n,k} = A (last column negated if det Q = -1)."""
    A = np.asarray(A, dtype=float)
    Q = np.concatenate([A, orthogonal_complement(A)], axis=-1)
    sign = np.sign(np.linalg.det(Q))
    Q[..., :, -1] *= sign[..., None]
    return Q


def polar_factor(a):
    """Unitary polar factor U V* of a (nearest matrix with orthonormal columns)."""
    U, s, Vh = np.linalg.svd(a, full_matrices=False)
    if np.any(s[..., -1] < 1e-8):
        raise ValueError("matrix is rank deficient; cannot project onto orthonormal frames")
    return U @ Vh


# ---------------------------------------------------------------------------
# groups


def exp_group(A, X, special: bool = False):
    """Geodesic step A exp(X) on SO(n)/SU(n)/U(n); X is the Lie-algebra coordinate."""
    A = np.asarray(A)
    X = np.asarray(X)
    res = _fro(X + herm(X))
    if special and np.iscomplexobj(X):
        res = res + np.abs(np.trace(X, axis1=-2, axis2=-1))
    if np.any(res > TOL_CONSTRAINT * _scale(X)):
        raise ConstraintError(f"exp_group: X is not skew (residual {np.max(res):.3g})")
    return A @ exp_skew(X)


def dist_group(A, B):
    """sqrt(sum_j |log lambda_j|^2) over eigenvalues of A* B (principal log).

    Emits CutLocusWarning when an eigenvalue lies within 1e-12 of -1; the
    distance is still returned with |log(-1)| = pi.
    """
    lam = np.linalg.eigvals(herm(np.asarray(A)) @ np.asarray(B))
    if np.any(np.abs(lam + 1.0) < CUT_LOCUS_TOL):
        warnings.warn("eigenvalue at -1: geodesic is not unique", CutLocusWarning, stacklevel=2)
    theta = np.abs(np.angle(lam))
    return np.sqrt(np.sum(theta**2, axis=-1))


# ---------------------------------------------------------------------------
# spheres and projective spaces


def exp_sphere(v, w):
    """v cos R + (w / R) sin R with R = |w|; also valid for complex unit vectors."""
    v = np.asarray(v)
    w = np.asarray(w)
    R = np.sqrt(np.sum(np.abs(w) ** 2, axis=-1))[..., None]
    safe = np.where(R > 0, R, 1.0)
    return v * np.cos(R) + w * np.where(R > 0, np.sin(safe) / safe, 1.0)


def dist_sphere(u, v):
    """Angle between unit vectors, in [0, pi].

    Evaluated as atan2(|v - <u,v> u|, <u,v>), which equals the clamped arccos
    of <u,v> but keeps full precision for nearly parallel vectors.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    c = np.real(np.sum(np.conj(u) * v, axis=-1))
    s = np.linalg.norm(v - c[..., None] * u, axis=-1)
    return np.arctan2(s, c)


def dist_projective(u, v):
    """Distance between the lines through unit vectors u and v, in [0, pi/2]."""
    u = np.asarray(u)
    v = np.asarray(v)
    ip = np.sum(np.conj(u) * v, axis=-1)
    s = np.linalg.norm(v - ip[..., None] * u, axis=-1)
    return np.arctan2(s, np.abs(ip))


def exp_cproj(v, eps):
    """Geodesic step on complex projective space from [v] along v_perp @ eps."""
    v = np.asarray(v, dtype=complex)
    eps = np.asarray(eps, dtype=complex)
    vperp = orthogonal_complement(v[..., :, None])
    w = (vperp @ eps[..., :, None])[..., 0]
    return exp_sphere(v, w)


def sphere_cap_volume(r, m: int):
    """Volume of a geodesic ball of radius r in the unit sphere S^m (0 <= r <= pi)."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, math.pi)
    area = 2.0 * math.exp(0.5 * m * math.log(math.pi) - gammaln(0.5 * m))
    # int_0^r sin^{m-1} = B(sin^2 r; m/2, 1/2) / 2, reflected past pi/2
    full = beta_fn(0.5 * m, 0.5)
    part = 0.5 * full * betainc(0.5 * m, 0.5, np.sin(r) ** 2)
    integral = np.where(r <= math.pi / 2, part, full - part)
    return area * integral


def sphere_volume(m: int) -> float:
    return 2.0 * math.exp(0.5 * (m + 1) * math.log(math.pi) - gammaln(0.5 * (m + 1)))


def cproj_ball_volume(r, m: int):
    """Ball volume in complex projective m-space: pi^m sin^{2m}(r) / m!."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, math.pi / 2)
    return math.pi**m / math.factorial(m) * np.sin(r) ** (2 * m)


# ---------------------------------------------------------------------------
# Stiefel and Grassmann


def exp_stiefel(A, D):
    """Canonical-metric geodesic step on the Stiefel manifold.

    QR = (I - A A*) D, then [M; N] = expm([[A* D, -R*], [R, 0]]) I_{2k,k}
    and the result is A M + Q N.
    """
    A = np.asarray(A)
    D = np.asarray(D)
    k = A.shape[-1]
    AtD = herm(A) @ D
    Q, R = np.linalg.qr(D - A @ AtD)
    top = np.concatenate([AtD, -herm(R)], axis=-1)
    bottom = np.concatenate([R, np.zeros_like(R)], axis=-1)
    E = expm(np.concatenate([top, bottom], axis=-2))
    M = E[..., :k, :k]
    N = E[..., k:, :k]
    return A @ M + Q @ N


def exp_grassmann(Y, D):
    """Grassmann geodesic step: [Y V, U] [cos S; sin S] V* with D = U S V* (compact SVD)."""
    Y = np.asarray(Y)
    D = np.asarray(D)
    U, s, Vh = np.linalg.svd(D, full_matrices=False)
    V = herm(Vh)
    return (Y @ V * np.cos(s)[..., None, :] + U * np.sin(s)[..., None, :]) @ Vh


def principal_angles(A, B):
    """Principal angles between span(A) and span(B), ascending.

    Cosines come from the singular values of A* B and sines from those of
    B - A A* B; pairing them through atan2 keeps precision at both ends.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    AtB = herm(A) @ B
    cos = np.linalg.svd(AtB, compute_uv=False)
    sin = np.linalg.svd(B - A @ AtB, compute_uv=False)[..., ::-1]
    return np.arctan2(np.clip(sin, 0.0, 1.0), np.clip(cos, 0.0, 1.0))


def dist_grassmann(A, B):
    """sqrt(sum_j theta_j^2) over principal angles theta_j."""
    return np.sqrt(np.sum(principal_angles(A, B) ** 2, axis=-1))


# ---------------------------------------------------------------------------
# manifolds


def _size_tuple(size):
    return (size,) if np.isscalar(size) else tuple(size)


def _haar_unitary(rng, size, n, complex_):
    G = _normal(rng, size + (n, n), 1.0, complex_)
    Q, R = np.linalg.qr(G)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    return Q * (d / np.abs(d))[..., None, :]


class _Group(Manifold):
    """Compact matrix group with the trace metric.

    Steps use X = (G - G*) / sqrt(2) with i.i.d. Gaussian G, so every free
    off-diagonal entry of X has variance delta. In the trace metric this is a
    rate-2 walk: E|X|^2 = 2 dim delta.
    """

    diffusion_rate = 2.0
    special = False

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self.point_shape = (n, n)

    def _param_repr(self):
        return str(self.n)

    @property
    def _complex(self):
        return self.dtype is complex

    def residual(self, x):
        x = np.asarray(x)
        res = _fro(herm(x) @ x - np.eye(self.n))
        if self.special:
            res = res + np.abs(np.linalg.det(x) - 1.0)
        return res

    def project(self, x):
        P = polar_factor(np.asarray(x, dtype=self.dtype))
        if self.special:
            det = np.linalg.det(P)
            if self._complex:
                P = P / (det ** (1.0 / self.n))[..., None, None]
            elif np.any(det < 0):
                raise ValueError("matrix is closer to the det = -1 component")
        return P

    def tangent_residual(self, x, w):
        w = np.asarray(w)
        res = _fro(w + herm(w))
        if self.special and self._complex:
            res = res + np.abs(np.trace(w, axis1=-2, axis2=-1))
        return res

    def sample_tangent(self, x, delta, rng):
        shape = np.shape(x)
        G = _normal(rng, shape, math.sqrt(delta), self._complex)
        X = (G - herm(G)) / math.sqrt(2.0)
        if self.special and self._complex:
            tr = np.trace(X, axis1=-2, axis2=-1) / self.n
            X = X - tr[..., None, None] * np.eye(self.n)
        return X

    def exp(self, x, w):
        return exp_group(x, w, special=self.special)

    def dist(self, x, y):
        return dist_group(x, y)

    def norm(self, x, w):
        return _fro(np.asarray(w))

    def base_point(self):
        return np.eye(self.n, dtype=self.dtype)

    def random_point(self, rng, size=()):
        Q = _haar_unitary(rng, _size_tuple(size), self.n, self._complex)
        if self.special:
            det = np.linalg.det(Q)
            if self._complex:
                Q = Q / (det ** (1.0 / self.n))[..., None, None]
            else:
                Q[..., :, 0] *= np.sign(det)[..., None]
        return Q


class SpecialOrthogonal(_Group):
    kind = Kind.SPECIAL_ORTHOGONAL
    dtype = float
    special = True

    def __init__(self, n):
        super().__init__(n)
        self.dim = n * (n - 1) // 2


class SpecialUnitary(_Group):
    kind = Kind.SPECIAL_UNITARY
    dtype = complex
    special = True

    def __init__(self, n):
        super().__init__(n)
        self.dim = n * n - 1


class Unitary(_Group):
    kind = Kind.UNITARY
    dtype = complex

    def __init__(self, n):
        super().__init__(n)
        self.dim = n * n


def _check_field(field):
    if field not in ("real", "complex"):
        raise ValueError(f"field must be 'real' or 'complex', got {field!r}")
    return field


class Stiefel(Manifold):
    """Orthonormal k-frames in F^n with the canonical metric.

    Only the real k = 1 case (the sphere) has a closed-form distance. For ball
    membership tests ``ball_distance`` uses the chord Z - Y measured in the
    canonical metric averaged over both endpoints, which agrees with the
    geodesic distance up to a relative O(d^2) error.
    """

    kind = Kind.STIEFEL

    def __init__(self, k: int, n: int, field: str = "real"):
        if not 1 <= k <= n:
            raise ValueError("need 1 <= k <= n")
        self.k, self.n, self.field = k, n, _check_field(field)
        self.dtype = complex if field == "complex" else float
        self.point_shape = (n, k)
        self.dim = n * k - k * (k + 1) // 2 if field == "real" else 2 * n * k - k * k

    def _param_repr(self):
        return f"{self.k}, {self.n}, {self.field!r}"

    @property
    def _complex(self):
        return self.field == "complex"

    def residual(self, x):
        x = np.asarray(x)
        return _fro(herm(x) @ x - np.eye(self.k))

    def project(self, x):
        return polar_factor(np.asarray(x, dtype=self.dtype))

    def tangent_residual(self, x, w):
        AtD = herm(np.asarray(x)) @ np.asarray(w)
        return _fro(AtD + herm(AtD))

    def sample_tangent(self, x, delta, rng):
        A = np.asarray(x)
        sd = math.sqrt(delta)
        G = _normal(rng, A.shape[:-2] + (self.k, self.k), sd, self._complex)
        omega = (G - herm(G)) / math.sqrt(2.0)
        P = _normal(rng, A.shape, sd, self._complex)
        return A @ omega + P - A @ (herm(A) @ P)

    def exp(self, x, w):
        return exp_stiefel(x, w)

    def _canonical_sq(self, A, D):
        AtD = herm(A) @ D
        return 0.5 * _fro(AtD) ** 2 + _fro(D - A @ AtD) ** 2

    def norm(self, x, w):
        return np.sqrt(self._canonical_sq(np.asarray(x), np.asarray(w)))

    def dist(self, x, y):
        if self.k == 1 and not self._complex:
            return dist_sphere(np.asarray(x)[..., 0], np.asarray(y)[..., 0])
        raise NotImplementedError("no closed-form Stiefel distance for this (k, field)")

    def ball_distance(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        D = y - x
        return np.sqrt(0.5 * (self._canonical_sq(x, D) + self._canonical_sq(y, D)))

    def base_point(self):
        return np.eye(self.n, self.k, dtype=self.dtype)

    def random_point(self, rng, size=()):
        G = _normal(rng, _size_tuple(size) + self.point_shape, 1.0, self._complex)
        return np.linalg.qr(G)[0]


class Grassmannian(Manifold):
    """k-dimensional subspaces of F^n, represented by orthonormal n x k bases."""

    kind = Kind.GRASSMANNIAN

    def __init__(self, k: int, n: int, field: str = "real"):
        if not 1 <= k < n:
            raise ValueError("need 1 <= k < n")
        self.k, self.n, self.field = k, n, _check_field(field)
        self.dtype = complex if field == "complex" else float
        self.point_shape = (n, k)
        self.dim = k * (n - k) * (2 if field == "complex" else 1)
        self._projective = k in (1, n - 1)
        self.is_distance_kernel = self._projective
        self.diameter = math.sqrt(min(k, n - k)) * math.pi / 2
        if self._projective:
            m = n - 1
            self.volume = (
                math.pi**m / math.factorial(m) if self._complex else 0.5 * sphere_volume(m)
            )

    def _param_repr(self):
        return f"{self.k}, {self.n}, {self.field!r}"

    @property
    def _complex(self):
        return self.field == "complex"

    def residual(self, x):
        x = np.asarray(x)
        return _fro(herm(x) @ x - np.eye(self.k))

    def project(self, x):
        x = np.asarray(x, dtype=self.dtype)
        Q, R = np.linalg.qr(x)
        if np.any(np.abs(np.diagonal(R, axis1=-2, axis2=-1)) < 1e-8):
            raise ValueError("matrix is rank deficient; cannot span a k-dimensional subspace")
        return Q

    def tangent_residual(self, x, w):
        return _fro(herm(np.asarray(x)) @ np.asarray(w))

    def sample_tangent(self, x, delta, rng):
        Y = np.asarray(x)
        P = _normal(rng, Y.shape, math.sqrt(delta), self._complex)
        return P - Y @ (herm(Y) @ P)

    def exp(self, x, w):
        return exp_grassmann(x, w)

    def dist(self, x, y):
        return dist_grassmann(x, y)

    def norm(self, x, w):
        return _fro(np.asarray(w))

    def ball_volume(self, r):
        if not self._projective:
            return super().ball_volume(r)
        m = self.n - 1
        if self._complex:
            return cproj_ball_volume(r, m)
        return sphere_cap_volume(np.minimum(r, math.pi / 2), m)

    @property
    def exact_ball_volume(self):
        return self._projective

    def base_point(self):
        return np.eye(self.n, self.k, dtype=self.dtype)

    def random_point(self, rng, size=()):
        G = _normal(rng, _size_tuple(size) + self.point_shape, 1.0, self._complex)
        return np.linalg.qr(G)[0]


class _UnitVectors(Manifold):
    """Shared machinery for manifolds represented by unit vectors."""

    is_distance_kernel = True

    def __init__(self, m: int):
        if m < 1:
            raise ValueError("dimension must be >= 1")
        self.m = m
        self.point_shape = (m + 1,)

    def _param_repr(self):
        return str(self.m)

    def residual(self, x):
        return np.abs(np.linalg.norm(np.asarray(x), axis=-1) - 1.0)

    def project(self, x):
        x = np.asarray(x, dtype=self.dtype)
        nrm = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(nrm < 1e-8):
            raise ValueError("zero vector cannot be normalized")
        return x / nrm

    def tangent_residual(self, x, w):
        return np.abs(np.sum(np.conj(np.asarray(x)) * np.asarray(w), axis=-1))

    def sample_tangent(self, x, delta, rng):
        x = np.asarray(x)
        g = _normal(rng, x.shape, math.sqrt(delta), self.dtype is complex)
        ip = np.sum(np.conj(x) * g, axis=-1, keepdims=True)
        return g - ip * x

    def exp(self, x, w):
        return exp_sphere(x, w)

    def norm(self, x, w):
        return np.linalg.norm(np.asarray(w), axis=-1)

    def base_point(self):
        e = np.zeros(self.m + 1, dtype=self.dtype)
        e[0] = 1.0
        return e

    def random_point(self, rng, size=()):
        g = _normal(rng, _size_tuple(size) + self.point_shape, 1.0, self.dtype is complex)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    @property
    def exact_ball_volume(self):
        return True


class Sphere(_UnitVectors):
    """Unit sphere S^m in R^{m+1} with the round metric."""

    kind = Kind.SPHERE
    diameter = math.pi

    def __init__(self, m: int):
        super().__init__(m)
        self.dim = m
        self.volume = sphere_volume(m)

    def dist(self, x, y):
        return dist_sphere(x, y)

    def ball_volume(self, r):
        return sphere_cap_volume(r, self.m)

    def heat_kernel_series(self, d, t, terms: int = 50):
        """Legendre series of the S^2 heat kernel (generator Laplacian/2)."""
        if self.m != 2:
            raise NotImplementedError("series implemented for S^2 only")
        return legendre_heat_kernel_s2(d, t, terms)


def legendre_heat_kernel_s2(d, t: float, terms: int = 50):
    """sum_{l <= terms} (2l+1)/(4 pi) exp(-l(l+1) t / 2) P_l(cos d)."""
    d = np.asarray(d, dtype=float)
    ls = np.arange(terms + 1)
    c = np.cos(d)[..., None]
    w = (2 * ls + 1) / (4 * math.pi) * np.exp(-ls * (ls + 1) * t / 2.0)
    return np.sum(w * eval_legendre(ls, c), axis=-1)


def cproj_heat_kernel_series(d, t: float, m: int, terms: int = 60):
    """Zonal eigen-expansion of the heat kernel on complex projective m-space.

    Degree-k eigenvalue 4k(k+m), multiplicity (2k+m)/m * C(k+m-1, k)^2,
    zonal function P_k^(m-1,0)(cos 2d) / P_k^(m-1,0)(1); generator Laplacian/2.
    """
    d = np.asarray(d, dtype=float)
    ks = np.arange(terms + 1)
    logmult = (
        np.log((2 * ks + m) / m)
        + 2 * (gammaln(ks + m) - gammaln(ks + 1) - gammaln(m))
        - 2.0 * ks * (ks + m) * t
    )
    c = np.cos(2 * d)[..., None]
    zonal = eval_jacobi(ks, m - 1, 0, c) / eval_jacobi(ks, m - 1, 0, 1.0)
    return np.sum(np.exp(logmult) * zonal, axis=-1) * math.factorial(m) / math.pi**m


class RealProjective(_UnitVectors):
    """Real projective m-space as unit vectors in R^{m+1} modulo sign."""

    kind = Kind.REAL_PROJECTIVE
    diameter = math.pi / 2

    def __init__(self, m: int):
        super().__init__(m)
        self.dim = m
        self.volume = 0.5 * sphere_volume(m)

    def dist(self, x, y):
        return dist_projective(x, y)

    def ball_volume(self, r):
        # balls of radius <= pi/2 lift injectively to sphere caps
        return sphere_cap_volume(np.minimum(r, math.pi / 2), self.m)


class ComplexProjective(_UnitVectors):
    """Complex projective m-space as unit vectors in C^{m+1} modulo phase.

    Tangent steps are horizontal (complex-orthogonal to the representative);
    real and imaginary parts of each coordinate have variance delta.
    """

    kind = Kind.COMPLEX_PROJECTIVE
    dtype = complex
    diameter = math.pi / 2

    def __init__(self, m: int):
        super().__init__(m)
        self.dim = 2 * m
        self.volume = math.pi**m / math.factorial(m)

    def dist(self, x, y):
        return dist_projective(x, y)

    def ball_volume(self, r):
        return cproj_ball_volume(r, self.m)

    def heat_kernel(self, d, t):
        return cproj_heat_kernel_series(d, t, self.m)


_FACTORIES = {
    "euclidean": lambda p: Euclidean(int(p["d"])),
    "circle": lambda p: Circle(float(p.get("L", 2 * math.pi))),
    "sphere": lambda p: Sphere(int(p["m"])),
    "so": lambda p: SpecialOrthogonal(int(p["n"])),
    "su": lambda p: SpecialUnitary(int(p["n"])),
    "u": lambda p: Unitary(int(p["n"])),
    "stiefel": lambda p: Stiefel(int(p["k"]), int(p["n"]), p.get("field", "real")),
    "grassmannian": lambda p: Grassmannian(int(p["k"]), int(p["n"]), p.get("field", "real")),
    "rp": lambda p: RealProjective(int(p["m"])),
    "cp": lambda p: ComplexProjective(int(p["m"])),
}


def make_manifold(kind: str, **params) -> Manifold:
    """Build a manifold from its kind name and parameters (e.g. ``make_manifold("sphere", m=2)``)."""
    try:
        factory = _FACTORIES[kind]
    except KeyError:
        raise ValueError(f"unknown manifold kind {kind!r}; choose from {sorted(_FACTORIES)}")
    try:
        return factory(params)
    except KeyError as exc:
        raise ValueError(f"manifold {kind!r} needs parameter {exc.args[0]!r}") from None
