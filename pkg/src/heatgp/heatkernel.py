"""Monte Carlo heat-kernel estimators.

Two counting estimators turn Brownian endpoints into kernel values:

* ball: hits of a small ball around ``y``, divided by ``N * vol(ball)``;
* strip: hits of the shell ``|d(x, z) - d0| < eps``, divided by the shell
  volume. On manifolds whose heat kernel depends only on distance this gives
  the kernel at every ``y`` with ``d(x, y) = d0`` at once, with far more hits.

Standard errors are the Poisson approximation ``sqrt(k) / (N V)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .brownian import SimulationPlan, derive_seed, simulate_paths
from .geometry import Manifold


class EstimationError(RuntimeError):
    """A kernel value could not be estimated from the available samples."""


class NoHitsError(EstimationError):
    """A requested kernel entry rests on zero Monte Carlo hits."""


@dataclass(frozen=True)
class Estimate:
    density: float
    stderr: float
    hits: int
    n_paths: int
    volume: float

    @property
    def no_hits(self) -> bool:
        return self.hits == 0


def _estimate(hits: int, n: int, volume: float) -> Estimate:
    scale = 1.0 / (n * volume)
    return Estimate(hits * scale, math.sqrt(hits) * scale, int(hits), int(n), float(volume))


def _endpoints(manifold, x, t, n_paths, seed, steps, workers=1) -> np.ndarray:
    plan = SimulationPlan.from_steps(
        manifold, x, t, steps, (t,), n_paths=n_paths, seed=seed, workers=workers
    )
    return simulate_paths(plan).at(t)


def _rate_time(manifold: Manifold, t: float) -> float:
    # the walk at nominal time t samples Brownian motion at rate * t
    return t / manifold.diffusion_rate


def point_at_distance(manifold: Manifold, x, d0: float, rng=None) -> np.ndarray:
    """A point at geodesic distance ``d0`` from ``x`` along a random unit direction."""
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.asarray(x)
    w = manifold.sample_tangent(x, 1.0, rng)
    return manifold.exp(x, w * (d0 / manifold.norm(x, w)))


# ---------------------------------------------------------------------------
# ball estimator


def ball_from_endpoints(manifold: Manifold, endpoints, y, eps: float) -> Estimate:
    """Ball estimate of p_t(x, y) from endpoints of walks started at x."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    r = manifold.ball_distance(endpoints, np.asarray(y))
    return _estimate(int(np.count_nonzero(r < eps)), len(endpoints), float(manifold.ball_volume(eps)))


def ball_estimate(manifold, x, y, t, eps, n_paths=20000, seed=0, steps=100, workers=1) -> Estimate:
    """Ball estimate of the heat kernel p_t(x, y)."""
    ends = _endpoints(manifold, x, _rate_time(manifold, t), n_paths, seed, steps, workers)
    return ball_from_endpoints(manifold, ends, y, eps)


# ---------------------------------------------------------------------------
# strip estimator and distance profiles


def default_strip_grid(manifold: Manifold, n: int = 25) -> tuple[np.ndarray, float]:
    """Interior grid ``diam (i+1)/(n+1)`` and a half-width that keeps strips disjoint."""
    diam = manifold.diameter
    if not math.isfinite(diam):
        raise ValueError("default grid needs a finite diameter; pass d0 explicitly")
    grid = diam * np.arange(1, n + 1) / (n + 1)
    eps = min(0.05 * diam, 0.45 * diam / (n + 1))
    return grid, eps


def _validate_grid(manifold: Manifold, grid, eps: float) -> np.ndarray:
    if not manifold.is_distance_kernel:
        raise ValueError(f"strip estimator needs a distance-only kernel; {manifold!r} is not")
    if not eps > 0:
        raise ValueError("eps must be positive")
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValueError("empty distance grid")
    if grid.size > 1 and np.min(np.diff(grid)) <= 2 * eps:
        raise ValueError("grid spacing must exceed 2*eps so strips are disjoint")
    if grid[0] - eps < 0 or grid[-1] + eps > manifold.diameter:
        raise ValueError(f"strips must lie inside [0, {manifold.diameter}]")
    return grid


def strip_counts(distances, grid, eps) -> np.ndarray:
    """Number of distances in each open interval (d0 - eps, d0 + eps)."""
    s = np.sort(np.asarray(distances, dtype=float))
    lo = np.searchsorted(s, grid - eps, side="right")
    hi = np.searchsorted(s, grid + eps, side="left")
    return hi - lo


@dataclass(frozen=True)
class DistanceProfile:
    """Kernel as a function of distance, known at nodes and interpolated between.

    Evaluation uses a monotone cubic (PCHIP) through the nodes, holds the end
    values constant outside them and floors the result at zero.
    """

    manifold: Manifold
    t: float
    d0: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    hits: np.ndarray
    n_paths: int
    eps: float
    delta: float = float("nan")
    seed: int = 0
    _interp: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d0 = np.asarray(self.d0, dtype=float)
        if np.any(np.diff(d0) <= 0):
            raise ValueError("profile nodes must be strictly increasing")
        for name in ("d0", "density", "stderr", "hits"):
            arr = np.array(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if d0.size > 1:
            f = PchipInterpolator(d0, self.density, extrapolate=False)
        else:
            f = lambda d: np.full(np.shape(d), float(self.density[0]))  # noqa: E731
        object.__setattr__(self, "_interp", f)

    def __call__(self, d) -> np.ndarray:
        d = np.clip(np.asarray(d, dtype=float), self.d0[0], self.d0[-1])
        return np.maximum(self._interp(d), 0.0)

    def stderr_at(self, d) -> np.ndarray:
        return np.interp(np.asarray(d, dtype=float), self.d0, self.stderr)

    def hits_at(self, d) -> np.ndarray:
        """Larger hit count of the two nodes bracketing each distance."""
        d = np.clip(np.asarray(d, dtype=float), self.d0[0], self.d0[-1])
        if len(self.d0) == 1:
            return np.full(d.shape, self.hits[0])
        j = np.clip(np.searchsorted(self.d0, d), 1, len(self.d0) - 1)
        return np.maximum(self.hits[j - 1], self.hits[j])

    def matrix(self, X1, X2) -> np.ndarray:
        """Kernel matrix between two batches of points.

        Raises NoHitsError when an entry falls between two zero-hit nodes.
        """
        X1 = np.asarray(X1)
        X2 = np.asarray(X2)
        d = self.manifold.dist(X1[:, None], X2[None, :])
        empty = self.hits_at(d) == 0
        if np.any(empty):
            bad = tuple(int(i) for i in np.argwhere(empty)[0])
            raise NoHitsError(
                f"entry {bad} at distance {d[bad]:.4g} rests on zero hits; "
                "re-estimate with more paths or a wider eps"
            )
        return self(d)

    def to_csv(self, path) -> None:
        write_profile_csv(self, path)


def write_profile_csv(profile: DistanceProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d0", "density", "stderr", "hits", "N", "eps", "t", "manifold"])
        for d, p, s, k in zip(profile.d0, profile.density, profile.stderr, profile.hits):
            w.writerow(
                [repr(float(d)), repr(float(p)), repr(float(s)), int(k),
                 profile.n_paths, repr(float(profile.eps)), repr(float(profile.t)),
                 repr(profile.manifold)]
            )


def _diagonal_node(manifold, ends, x, eps_diag):
    est = ball_from_endpoints(manifold, ends, x, eps_diag)
    return 0.0, est.density, est.stderr, est.hits


def strip_from_endpoints(
    manifold: Manifold,
    x,
    endpoints,
    grid,
    eps: float,
    t: float,
    *,
    diagonal: str | None = "ball",
    diag_eps: float | None = None,
    min_hits: int = 10,
    delta: float = float("nan"),
    seed: int = 0,
) -> DistanceProfile:
    """Strip estimates at every grid distance, plus an optional node at d = 0.

    ``diagonal``:
      * ``"ball"``: a ball estimate at ``x`` of radius ``diag_eps`` (default ``eps``);
      * ``"extrapolate"``: leading nodes with fewer than ``min_hits`` hits are
        dropped and the first reliable value is held down to d = 0;
      * ``None``: nodes only.
    """
    grid = _validate_grid(manifold, grid, eps)
    n = len(endpoints)
    r = manifold.dist(np.asarray(x), endpoints)
    k = strip_counts(r, grid, eps)
    vol = manifold.strip_volume(grid, eps)
    dens = k / (n * vol)
    se = np.sqrt(k) / (n * vol)
    d0, hits = grid, k
    if diagonal == "ball":
        e = diag_eps if diag_eps is not None else eps
        _, p0, s0, k0 = _diagonal_node(manifold, endpoints, x, e)
        d0 = np.concatenate([[0.0], grid])
        dens = np.concatenate([[p0], dens])
        se = np.concatenate([[s0], se])
        hits = np.concatenate([[k0], k])
    elif diagonal == "extrapolate":
        ok = np.flatnonzero(k >= min_hits)
        if ok.size == 0:
            raise NoHitsError(f"no strip collected {min_hits} hits")
        j = ok[0]
        d0 = np.concatenate([[0.0], grid[j:]])
        dens = np.concatenate([[dens[j]], dens[j:]])
        se = np.concatenate([[se[j]], se[j:]])
        hits = np.concatenate([[k[j]], k[j:]])
    elif diagonal is not None:
        raise ValueError(f"unknown diagonal mode {diagonal!r}")
    return DistanceProfile(manifold, t, d0, dens, se, hits, n, eps, delta, seed)


def strip_estimate(
    manifold: Manifold,
    x,
    d0_grid,
    t: float,
    eps: float,
    n_paths: int = 20000,
    seed: int = 0,
    steps: int = 100,
    diagonal: str | None = "ball",
    workers: int = 1,
    **kw,
) -> DistanceProfile:
    """Strip-estimator distance profile of p_t from walks started at ``x``."""
    _validate_grid(manifold, d0_grid, eps)
    tw = _rate_time(manifold, t)
    ends = _endpoints(manifold, x, tw, n_paths, seed, steps, workers)
    return strip_from_endpoints(
        manifold, x, ends, d0_grid, eps, t, diagonal=diagonal,
        delta=tw / steps, seed=seed, **kw,
    )


def strip_profiles(
    manifold: Manifold,
    x,
    d0_grid,
    t_grid,
    eps: float,
    n_paths: int = 20000,
    seed: int = 0,
    steps: int = 100,
    diagonal: str | None = "ball",
    workers: int = 1,
    **kw,
) -> dict[float, DistanceProfile]:
    """Profiles for several diffusion times from one simulation.

    The walk runs to max(t_grid) in ``steps`` steps; every t is snapped to the
    nearest step and read from a checkpoint.
    """
    _validate_grid(manifold, d0_grid, eps)
    batch, cols = _batch_for_times(manifold, x, t_grid, n_paths, seed, steps, workers)
    out = {}
    for t, c in zip(t_grid, cols):
        out[float(t)] = strip_from_endpoints(
            manifold, x, batch.points[:, c], d0_grid, eps, float(t),
            diagonal=diagonal, delta=batch.delta, seed=seed, **kw,
        )
    return out


def _batch_for_times(manifold, x, t_grid, n_paths, seed, steps, workers):
    """One walk batch to the largest time; returns it with a column per entry of t_grid."""
    tws = [_rate_time(manifold, float(t)) for t in t_grid]
    plan = SimulationPlan.from_steps(
        manifold, x, max(tws), steps, tws, n_paths=n_paths, seed=seed, workers=workers
    )
    batch = simulate_paths(plan)
    cols = [batch.column(round(tw / plan.delta) * plan.delta) for tw in tws]
    return batch, cols


# ---------------------------------------------------------------------------
# pairwise ball matrices


@dataclass(frozen=True)
class PairwiseMatrix:
    """Symmetrized ball estimates of p_t(x_i, x_j) over a fixed set of locations."""

    manifold: Manifold
    t: float
    locations: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    hits: np.ndarray
    n_paths: int
    eps: float
    delta: float = float("nan")
    seed: int = 0

    def index_of(self, X) -> np.ndarray:
        X = np.asarray(X)
        d = self.manifold.ball_distance(X[:, None], self.locations[None, :])
        j = np.argmin(d, axis=-1)
        if np.any(np.take_along_axis(d, j[:, None], -1) > 1e-9):
            raise EstimationError("point is not one of the estimated locations")
        return j

    def matrix(self, X1, X2) -> np.ndarray:
        i = self.index_of(X1)
        j = self.index_of(X2)
        sub = self.hits[np.ix_(i, j)]
        if np.any(sub == 0):
            bad = tuple(np.argwhere(sub == 0)[0])
            raise NoHitsError(f"pairwise entry {bad} rests on zero hits")
        return self.density[np.ix_(i, j)]


def pairwise_ball_matrices(
    manifold: Manifold,
    locations,
    t_grid,
    eps: float,
    n_paths: int = 20000,
    seed: int = 0,
    steps: int = 100,
    workers: int = 1,
) -> dict[float, PairwiseMatrix]:
    """Ball-estimate matrices for several times; one walk batch per location.

    Row i uses walks from x_i (seed derived from ``(seed, i)``). The raw matrix
    is symmetrized as (D + D^T) / 2 and off-diagonal ``hits`` hold k_ij + k_ji.
    """
    X = np.asarray(locations, dtype=manifold.dtype)
    n = len(X)
    vol = float(manifold.ball_volume(eps))
    T = len(t_grid)
    k = np.zeros((T, n, n), dtype=np.int64)
    delta = float("nan")
    for i in range(n):
        batch, cols = _batch_for_times(
            manifold, X[i], t_grid, n_paths, derive_seed(seed, i), steps, workers
        )
        delta = batch.delta
        for c, col in enumerate(cols):
            r = manifold.ball_distance(batch.points[:, col][:, None], X[None, :])
            k[c, i] = np.count_nonzero(r < eps, axis=0)
    raw = k / (n_paths * vol)
    out = {}
    for c, t in enumerate(t_grid):
        D = raw[c]
        se = np.sqrt(k[c]) / (n_paths * vol)
        # off-diagonal pairs average two independent rows; the diagonal has one estimate
        sym_se = 0.5 * np.sqrt(se**2 + se.T**2)
        np.fill_diagonal(sym_se, np.diag(se))
        hits = k[c] + k[c].T
        np.fill_diagonal(hits, np.diag(k[c]))
        out[float(t)] = PairwiseMatrix(
            manifold, float(t), X, 0.5 * (D + D.T), sym_se, hits, n_paths, eps, delta, seed,
        )
    return out


def pairwise_ball_matrix(manifold, locations, t, eps, n_paths=20000, seed=0, steps=100, workers=1):
    return pairwise_ball_matrices(manifold, locations, [t], eps, n_paths, seed, steps, workers)[float(t)]


# ---------------------------------------------------------------------------
# quotients, closed forms, efficiency


def antipodal_images(d):
    """Cover distances of the two lifts for real projective space from the sphere."""
    d = np.asarray(d, dtype=float)
    return np.stack([d, math.pi - d], axis=-1)


def circle_images(L: float, J: int = 6):
    """Image distances on the line for the circle of circumference L."""
    js = np.arange(-J, J + 1)

    def images(d):
        return np.abs(np.asarray(d, dtype=float)[..., None] + js * L)

    return images


@dataclass(frozen=True)
class QuotientKernel:
    """p(d) = sum over images g of p_cover(d(x, g y)), for an isometric group action."""

    base: Callable
    images: Callable

    def __call__(self, d):
        return np.sum(self.base(self.images(d)), axis=-1)

    def stderr(self, d):
        se = getattr(self.base, "stderr_at", None)
        if se is None:
            raise AttributeError("base kernel carries no standard errors")
        return np.sqrt(np.sum(se(self.images(d)) ** 2, axis=-1))


def quotient_kernel(base, images) -> QuotientKernel:
    return QuotientKernel(base, images)


class ExactKernel:
    """Closed-form or series heat kernel with the estimator interface."""

    def __init__(self, manifold: Manifold, t: float):
        if not hasattr(manifold, "heat_kernel"):
            raise ValueError(f"no closed-form heat kernel for {manifold!r}")
        self.manifold = manifold
        self.t = float(t)

    def __call__(self, d):
        return self.manifold.heat_kernel(d, self.t)

    def matrix(self, X1, X2):
        X1 = np.asarray(X1)
        X2 = np.asarray(X2)
        d = self.manifold.dist(X1[:, None], X2[None])
        return self(d)


@dataclass(frozen=True)
class EfficiencyResult:
    eps: float
    d0: float
    strip_hits: int
    ball_hits: int
    ratio: float
    ratio_se: float
    volume_ratio: float
    censored: bool

    @property
    def consistent(self) -> bool:
        """Ratio is no more than 3 standard errors below the volume ratio."""
        return self.censored or self.ratio + 3 * self.ratio_se >= self.volume_ratio


def efficiency_from_endpoints(manifold, x, endpoints, d0, eps, y=None) -> EfficiencyResult:
    """Strip hits over ball hits for one shell; the ball is centered on the shell."""
    y = point_at_distance(manifold, x, d0) if y is None else y
    ks = int(strip_counts(manifold.dist(np.asarray(x), endpoints), np.array([d0]), eps)[0])
    kb = int(np.count_nonzero(manifold.ball_distance(endpoints, y) < eps))
    vr = float(manifold.strip_volume(d0, eps) / manifold.ball_volume(eps))
    if kb == 0:
        return EfficiencyResult(eps, d0, ks, 0, math.inf, math.inf, vr, True)
    ratio = ks / kb
    # ball hits are a subset of strip hits: Var(log r) ~ 1/kb - 1/ks
    se = ratio * math.sqrt(max(1.0 / kb - 1.0 / max(ks, 1), 0.0))
    return EfficiencyResult(eps, d0, ks, kb, ratio, se, vr, False)


def efficiency_ratio(manifold, x, d0, t, eps, n_paths=20000, seed=0, steps=100, workers=1):
    ends = _endpoints(manifold, x, _rate_time(manifold, t), n_paths, seed, steps, workers)
    return efficiency_from_endpoints(manifold, x, ends, d0, eps)


def explicit_ratio_bound(m: int, eps: float) -> float:
    """pi^{(1-m)/2} Gamma(m/2 + 1) / Gamma(3/2) eps^{1-m}: small-eps lower bound, curvature ignored."""
    return math.exp(
        0.5 * (1 - m) * math.log(math.pi) + math.lgamma(0.5 * m + 1) - math.lgamma(1.5)
    ) * eps ** (1 - m)


def loglog_slope(eps, ratios) -> float:
    """Least-squares slope of log(ratio) against log(eps)."""
    return float(np.polyfit(np.log(eps), np.log(ratios), 1)[0])


def profile_mass(profile, n: int = 4000) -> float:
    """Integral of a distance profile against the shell-volume measure."""
    m = profile.manifold
    edges = np.linspace(0.0, m.diameter, n + 1)
    shells = np.diff(m.ball_volume(edges))
    mids = 0.5 * (edges[1:] + edges[:-1])
    return float(np.sum(profile(mids) * shells))


def write_matrix_csv(pm: PairwiseMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "density", "stderr", "hits", "N", "eps", "t", "manifold"])
        n = len(pm.locations)
        for i in range(n):
            for j in range(n):
                w.writerow([i, j, repr(float(pm.density[i, j])), repr(float(pm.stderr[i, j])),
                            int(pm.hits[i, j]), pm.n_paths, repr(float(pm.eps)),
                            repr(float(pm.t)), repr(pm.manifold)])
