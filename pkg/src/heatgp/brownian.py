"""Geodesic random walk simulation of Brownian motion.

Each step draws an isotropic Gaussian tangent vector with variance ``delta``
per coordinate and follows the exponential map. Positions are kept only at
checkpoint times, so one batch of paths can serve several diffusion times.

Paths are generated in fixed-size blocks. Block ``b`` owns a Philox stream
keyed by ``(seed, b)``; a partial final block is simulated in full and
truncated, so path ``i`` depends only on ``(seed, i, block_size)`` and never on
``n_paths`` or on how blocks are scheduled across workers.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .geometry import Circle, Euclidean, Manifold
from .matman import Sphere, legendre_heat_kernel_s2

DEFAULT_BLOCK = 1024
REPROJECT_EVERY = 50


def block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def snap_times(times, delta: float) -> tuple[float, ...]:
    """Round times to the nearest multiple of ``delta``."""
    return tuple(round(float(t) / delta) * delta for t in times)


@dataclass(frozen=True)
class SimulationPlan:
    manifold: Manifold
    start: np.ndarray
    t_total: float
    delta: float
    checkpoints: tuple[float, ...] = ()
    n_paths: int = 20000
    seed: int = 0
    reproject_every: int = REPROJECT_EVERY
    block_size: int = DEFAULT_BLOCK
    workers: int = 1

    def __post_init__(self):
        if not self.t_total > 0:
            raise ValueError("t_total must be positive")
        if not 0 < self.delta <= self.t_total:
            raise ValueError("need 0 < delta <= t_total")
        steps = self.t_total / self.delta
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"t_total / delta = {steps} is not an integer")
        cps = tuple(sorted(float(c) for c in self.checkpoints)) or (float(self.t_total),)
        for c in cps:
            j = c / self.delta
            if abs(j - round(j)) > 1e-9 * max(1.0, j) or not -1e-12 <= c <= self.t_total * (1 + 1e-12):
                raise ValueError(f"checkpoint {c} is not a multiple of delta within [0, t_total]")
        object.__setattr__(self, "checkpoints", cps)
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        start = np.asarray(self.start, dtype=self.manifold.dtype)
        self.manifold.check(start, tol=1e-8)
        object.__setattr__(self, "start", start)

    @classmethod
    def from_steps(cls, manifold, start, t_total, steps=100, checkpoints=(), **kw):
        """Plan with delta = t_total / steps; checkpoints are snapped to the step grid."""
        delta = t_total / steps
        cps = snap_times(checkpoints, delta) if checkpoints else (t_total,)
        return cls(manifold, start, t_total, delta, cps, **kw)

    @property
    def steps(self) -> int:
        return int(round(self.t_total / self.delta))

    @property
    def checkpoint_steps(self) -> tuple[int, ...]:
        return tuple(int(round(c / self.delta)) for c in self.checkpoints)


@dataclass(frozen=True)
class BrownianPath:
    times: np.ndarray
    points: np.ndarray
    index: int
    seed: int


@dataclass(frozen=True)
class PathBatch:
    """Positions of ``n_paths`` walks at each checkpoint: ``points[i, c]``."""

    manifold: Manifold
    times: np.ndarray
    points: np.ndarray
    seed: int
    delta: float
    start: np.ndarray = field(repr=False)

    def __len__(self):
        return self.points.shape[0]

    def column(self, t: float) -> int:
        c = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[c] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no checkpoint at t={t}; available {self.times.tolist()}")
        return c

    def at(self, t: float) -> np.ndarray:
        return self.points[:, self.column(t)]

    def path(self, i: int) -> BrownianPath:
        return BrownianPath(self.times, self.points[i], i, self.seed)


def _simulate_block(plan: SimulationPlan, block: int) -> np.ndarray:
    m = plan.manifold
    B = plan.block_size
    rng = block_rng(plan.seed, block)
    x = np.broadcast_to(plan.start, (B,) + plan.start.shape).copy()
    cols = {}
    for c, s in enumerate(plan.checkpoint_steps):
        cols.setdefault(s, []).append(c)
    out = np.empty((B, len(plan.checkpoints)) + plan.start.shape, dtype=m.dtype)
    for c in cols.get(0, ()):
        out[:, c] = x
    for j in range(1, plan.steps + 1):
        x = m.exp(x, m.sample_tangent(x, plan.delta, rng))
        if j % plan.reproject_every == 0:
            x = m.project(x)
        for c in cols.get(j, ()):
            out[:, c] = x
    return out


def simulate_paths(plan: SimulationPlan) -> PathBatch:
    """Run the geodesic random walk for every path in the plan."""
    n_blocks = -(-plan.n_paths // plan.block_size)
    if plan.workers > 1:
        with ThreadPoolExecutor(plan.workers) as pool:
            blocks = list(pool.map(lambda b: _simulate_block(plan, b), range(n_blocks)))
    else:
        blocks = [_simulate_block(plan, b) for b in range(n_blocks)]
    points = np.concatenate(blocks, axis=0)[: plan.n_paths]
    return PathBatch(
        plan.manifold,
        np.asarray(plan.checkpoints, dtype=float),
        points,
        plan.seed,
        plan.delta,
        plan.start,
    )


def write_endpoints_csv(batch: PathBatch, path) -> None:
    """Dump checkpoint positions: path index, time, flattened coordinates."""
    shape = batch.points.shape[2:]
    n_coord = int(np.prod(shape))
    cplx = np.iscomplexobj(batch.points)
    header = ["path", "time"]
    if cplx:
        header += [f"re{j}" for j in range(n_coord)] + [f"im{j}" for j in range(n_coord)]
    else:
        header += [f"x{j}" for j in range(n_coord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(batch)):
            for c, t in enumerate(batch.times):
                flat = batch.points[i, c].reshape(-1)
                vals = list(flat.real) + list(flat.imag) if cplx else list(flat)
                w.writerow([i, repr(float(t))] + [repr(float(v)) for v in vals])


# ---------------------------------------------------------------------------
# convergence diagnostics


def radial_reference_cdf(manifold: Manifold, t: float):
    """CDF of d(x, B_x(t)) for manifolds with a closed-form or series kernel."""
    tt = t * manifold.diffusion_rate
    if isinstance(manifold, Euclidean):
        return stats.chi(df=manifold.dim, scale=math.sqrt(tt)).cdf
    if isinstance(manifold, Circle):
        grid = np.linspace(0.0, manifold.diameter, 4001)
        dens = 2.0 * manifold.heat_kernel(grid, tt)
    elif isinstance(manifold, Sphere) and manifold.m == 2:
        grid = np.linspace(0.0, math.pi, 4001)
        dens = legendre_heat_kernel_s2(grid, tt) * 2 * math.pi * np.sin(grid)
    else:
        raise NotImplementedError(f"no reference radial law for {manifold!r}")
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return lambda r: np.interp(r, grid, cdf)


def wasserstein_to_cdf(samples, cdf, upper: float | None = None, n: int = 4001) -> float:
    """W1 distance between an empirical sample on [0, upper] and a reference CDF."""
    s = np.sort(np.asarray(samples, dtype=float))
    hi = upper if upper is not None and math.isfinite(upper) else 1.5 * s[-1] + 1e-12
    grid = np.linspace(0.0, hi, n)
    emp = np.searchsorted(s, grid, side="right") / len(s)
    return float(np.trapezoid(np.abs(emp - cdf(grid)), grid))


def convergence_probe(manifold, t, deltas, n_paths, seed=0, start=None):
    """W1 distance of the endpoint radial law to its reference, per step variance.

    Returns rows ``(delta, w1, noise_floor)``; the floor is a rough MC scale
    (range / sqrt(n_paths)).
    """
    cdf = radial_reference_cdf(manifold, t)
    x0 = manifold.base_point() if start is None else np.asarray(start)
    rows = []
    for delta in deltas:
        plan = SimulationPlan(manifold, x0, t, delta, (t,), n_paths, seed)
        ends = simulate_paths(plan).at(t)
        r = manifold.dist(x0, ends)
        upper = manifold.diameter if math.isfinite(manifold.diameter) else None
        w1 = wasserstein_to_cdf(r, cdf, upper)
        scale = upper if upper is not None else 4 * math.sqrt(t * manifold.diffusion_rate)
        rows.append((float(delta), w1, scale / math.sqrt(n_paths)))
    return rows
