"""Manifold contract, flat and one-dimensional cases, closed-form heat kernels.

Every manifold works on batches: a point array has shape ``(..., *point_shape)``
and all methods broadcast over the leading axes. Single points are the
zero-batch case.
"""

from __future__ import annotations

import abc
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

TOL_CONSTRAINT = 1e-10


class Kind(enum.Enum):
    EUCLIDEAN = "euclidean"
    CIRCLE = "circle"
    SPHERE = "sphere"
    SPECIAL_ORTHOGONAL = "so"
    SPECIAL_UNITARY = "su"
    UNITARY = "u"
    STIEFEL = "stiefel"
    GRASSMANNIAN = "grassmannian"
    REAL_PROJECTIVE = "rp"
    COMPLEX_PROJECTIVE = "cp"


class ConstraintError(ValueError):
    """A point or tangent vector violates its manifold constraint."""


def euclidean_ball_volume(r, m: int):
    """Volume of a radius-``r`` ball in R^m."""
    r = np.asarray(r, dtype=float)
    return np.exp(0.5 * m * math.log(math.pi) - gammaln(0.5 * m + 1.0)) * r**m


def euclidean_heat_kernel(d, t: float, dim: int):
    """Heat kernel of R^dim for generator Laplacian/2: (2 pi t)^(-dim/2) exp(-d^2 / 2t)."""
    if not t > 0:
        raise ValueError(f"diffusion time must be positive, got {t}")
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    d = np.asarray(d, dtype=float)
    return (2.0 * math.pi * t) ** (-0.5 * dim) * np.exp(-(d**2) / (2.0 * t))


def _image_count(t: float, L: float) -> int:
    # exp(-(jL)^2 / 2t) < 1e-18 beyond this many images
    return int(math.ceil(math.sqrt(2.0 * t * 42.0) / L)) + 1


def circle_heat_kernel(d, t: float, L: float):
    """Heat kernel of the circle R / L Z as a wrapped Gaussian (sum over images)."""
    if not L > 0:
        raise ValueError(f"circumference must be positive, got {L}")
    d = np.asarray(d, dtype=float)
    J = _image_count(t, L)
    js = np.arange(-J, J + 1)
    shifted = np.abs(d[..., None] + js * L)
    return euclidean_heat_kernel(shifted, t, 1).sum(axis=-1)


class Manifold(abc.ABC):
    """Riemannian manifold with closed-form exponential map and distance.

    ``diffusion_rate`` is the factor by which ``sample_tangent`` steps of
    variance ``delta`` scale the mean squared step length relative to an
    isotropic step in the metric used by ``dist``: E|w|^2 = rate * dim * delta.
    A walk with rate r therefore samples Brownian motion at time r * t.
    """

    kind: Kind
    dim: int
    point_shape: tuple[int, ...]
    dtype: type = float
    is_distance_kernel: bool = False
    diffusion_rate: float = 1.0
    diameter: float = math.inf
    volume: float | None = None

    def __repr__(self):
        return f"{type(self).__name__}({self._param_repr()})"

    def _param_repr(self) -> str:
        return ""

    def __eq__(self, other):
        return type(self) is type(other) and repr(self) == repr(other)

    def __hash__(self):
        return hash(repr(self))

    @abc.abstractmethod
    def residual(self, x) -> np.ndarray:
        """Constraint residual of each point in the batch."""

    @abc.abstractmethod
    def project(self, x) -> np.ndarray:
        """Nearest constraint-satisfying representative."""

    @abc.abstractmethod
    def tangent_residual(self, x, w) -> np.ndarray:
        ...

    @abc.abstractmethod
    def sample_tangent(self, x, delta: float, rng: np.random.Generator) -> np.ndarray:
        ...

    @abc.abstractmethod
    def exp(self, x, w) -> np.ndarray:
        ...

    @abc.abstractmethod
    def dist(self, x, y) -> np.ndarray:
        ...

    @abc.abstractmethod
    def norm(self, x, w) -> np.ndarray:
        """Length of tangent vector ``w`` at ``x`` in the manifold metric."""

    @abc.abstractmethod
    def base_point(self) -> np.ndarray:
        ...

    @abc.abstractmethod
    def random_point(self, rng: np.random.Generator, size=()) -> np.ndarray:
        ...

    def ball_distance(self, x, y) -> np.ndarray:
        """Distance used for small-ball membership tests."""
        return self.dist(x, y)

    def ball_volume(self, r):
        """Geodesic-ball volume; leading Euclidean term unless overridden."""
        return euclidean_ball_volume(r, self.dim)

    @property
    def exact_ball_volume(self) -> bool:
        return False

    def strip_volume(self, d0, eps):
        """Volume of {z : |d(x, z) - d0| < eps}, from ball volumes."""
        if not self.is_distance_kernel:
            raise NotImplementedError(f"{self!r} has no distance-only heat kernel")
        d0 = np.asarray(d0, dtype=float)
        hi = np.minimum(d0 + eps, self.diameter)
        lo = np.clip(d0 - eps, 0.0, self.diameter)
        return self.ball_volume(hi) - self.ball_volume(lo)

    def check(self, x, tol: float = TOL_CONSTRAINT) -> None:
        res = np.max(self.residual(x), initial=0.0)
        if not res <= tol:
            raise ConstraintError(f"{self!r}: constraint residual {res:.3g} > {tol:.1g}")


class Euclidean(Manifold):
    kind = Kind.EUCLIDEAN
    is_distance_kernel = True

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.dim = d
        self.point_shape = (d,)

    def _param_repr(self):
        return str(self.dim)

    def residual(self, x):
        return np.zeros(np.shape(x)[:-1])

    def project(self, x):
        return np.asarray(x, dtype=float)

    def tangent_residual(self, x, w):
        return np.zeros(np.shape(w)[:-1])

    def sample_tangent(self, x, delta, rng):
        shape = np.shape(x)
        return math.sqrt(delta) * rng.standard_normal(shape)

    def exp(self, x, w):
        return np.asarray(x) + np.asarray(w)

    def dist(self, x, y):
        return np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1)

    def norm(self, x, w):
        return np.linalg.norm(w, axis=-1)

    def base_point(self):
        return np.zeros(self.dim)

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.standard_normal(size + self.point_shape)

    @property
    def exact_ball_volume(self):
        return True

    def heat_kernel(self, d, t):
        return euclidean_heat_kernel(d, t, self.dim)


class Circle(Manifold):
    """Circle of circumference ``L``; points are arclength coordinates in [0, L), shape (1,)."""

    kind = Kind.CIRCLE
    dim = 1
    point_shape = (1,)
    is_distance_kernel = True

    def __init__(self, L: float = 2 * math.pi):
        if not L > 0:
            raise ValueError("circumference must be positive")
        self.L = float(L)
        self.diameter = self.L / 2
        self.volume = self.L

    def _param_repr(self):
        return repr(self.L)

    def residual(self, x):
        x = np.asarray(x, dtype=float)[..., 0]
        return np.maximum(0.0, np.maximum(-x, x - self.L))

    def project(self, x):
        return np.mod(np.asarray(x, dtype=float), self.L)

    def tangent_residual(self, x, w):
        return np.zeros(np.shape(w)[:-1])

    def sample_tangent(self, x, delta, rng):
        return math.sqrt(delta) * rng.standard_normal(np.shape(x))

    def exp(self, x, w):
        return np.mod(np.asarray(x) + np.asarray(w), self.L)

    def dist(self, x, y):
        diff = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))[..., 0]
        diff = np.mod(diff, self.L)
        return np.minimum(diff, self.L - diff)

    def norm(self, x, w):
        return np.abs(np.asarray(w))[..., 0]

    def base_point(self):
        return np.zeros(1)

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.uniform(0.0, self.L, size + (1,))

    def ball_volume(self, r):
        return np.minimum(2.0 * np.asarray(r, dtype=float), self.L)

    @property
    def exact_ball_volume(self):
        return True

    def heat_kernel(self, d, t):
        return circle_heat_kernel(d, t, self.L)


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """A validated point; ``np.asarray(point)`` gives its matrix representative."""

    manifold: Manifold
    rep: np.ndarray

    def __post_init__(self):
        rep = np.array(self.rep, dtype=self.manifold.dtype)
        if rep.shape != self.manifold.point_shape:
            raise ValueError(f"expected shape {self.manifold.point_shape}, got {rep.shape}")
        self.manifold.check(rep)
        rep.flags.writeable = False
        object.__setattr__(self, "rep", rep)

    def __array__(self, dtype=None, copy=None):
        return self.rep if dtype is None else self.rep.astype(dtype)


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: ManifoldPoint
    rep: np.ndarray

    def __post_init__(self):
        m = self.base.manifold
        rep = np.array(self.rep, dtype=m.dtype)
        res = float(np.max(m.tangent_residual(self.base.rep, rep), initial=0.0))
        if res > TOL_CONSTRAINT * max(1.0, float(np.abs(rep).max(initial=0.0))):
            raise ConstraintError(f"not tangent at base point (residual {res:.3g})")
        rep.flags.writeable = False
        object.__setattr__(self, "rep", rep)

    def __array__(self, dtype=None, copy=None):
        return self.rep if dtype is None else self.rep.astype(dtype)

    @property
    def norm(self) -> float:
        return float(self.base.manifold.norm(self.base.rep, self.rep))


def project_to_manifold(p, m: Manifold) -> ManifoldPoint:
    """Snap a nearly-feasible matrix onto ``m`` and wrap it as a ManifoldPoint."""
    return ManifoldPoint(m, m.project(np.asarray(p)))


def sample_tangent_gaussian(x, delta: float, rng: np.random.Generator) -> TangentVector:
    """Isotropic Gaussian tangent vector at ``x`` with per-coordinate variance ``delta``."""
    if delta < 0:
        raise ValueError("step variance must be non-negative")
    if not isinstance(x, ManifoldPoint):
        raise TypeError("expected a ManifoldPoint")
    w = x.manifold.sample_tangent(x.rep, delta, rng)
    return TangentVector(x, w)
