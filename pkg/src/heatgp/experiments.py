"""Experiment drivers: estimator comparison, efficiency ratios, knot and projective regression.

Each driver takes an ``ExperimentConfig`` and returns plain rows plus a summary
dict; the command-line layer only handles I/O.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import gp
from .brownian import SimulationPlan, derive_seed, simulate_paths
from .config import ExperimentConfig
from .geometry import Circle, Manifold
from .heatkernel import (
    ExactKernel,
    ball_from_endpoints,
    default_strip_grid,
    efficiency_from_endpoints,
    explicit_ratio_bound,
    loglog_slope,
    point_at_distance,
    strip_from_endpoints,
    strip_profiles,
)
from .matman import ComplexProjective, Sphere, legendre_heat_kernel_s2, make_manifold


def _diagonal(cfg: ExperimentConfig):
    return None if cfg.diagonal == "none" else cfg.diagonal


def build_manifold(cfg: ExperimentConfig) -> Manifold:
    params = dict(cfg.manifold)
    return make_manifold(params.pop("kind"), **params)


def reference_kernel(manifold: Manifold, t: float):
    """Closed-form or series kernel as a function of distance, if one exists."""
    if hasattr(manifold, "heat_kernel"):
        return lambda d: manifold.heat_kernel(d, t)
    if isinstance(manifold, Sphere) and manifold.m == 2:
        return lambda d: legendre_heat_kernel_s2(d, t)
    return None


# ---------------------------------------------------------------------------
# estimator comparison


def _grid_and_eps(cfg: ExperimentConfig, m: Manifold):
    if cfg.grid is not None:
        grid = np.asarray(cfg.grid, dtype=float)
        eps = cfg.eps
        if eps is None:
            eps = 0.45 * float(np.min(np.diff(grid))) if len(grid) > 1 else 0.1
        return grid, eps
    if math.isfinite(m.diameter):
        grid, eps = default_strip_grid(m, cfg.grid_size)
        return grid, (cfg.eps if cfg.eps is not None else eps)
    grid = np.linspace(0.2, 2.0, 7)
    return grid, (cfg.eps if cfg.eps is not None else 0.14)


def run_estimate(cfg: ExperimentConfig):
    """Ball and/or strip estimates on a distance grid from one walk batch."""
    m = build_manifold(cfg)
    x = m.base_point()
    grid, eps = _grid_and_eps(cfg, m)
    ball_eps = cfg.ball_eps if cfg.ball_eps is not None else eps
    tw = cfg.t / m.diffusion_rate
    plan = SimulationPlan.from_steps(m, x, tw, cfg.steps, (tw,), n_paths=cfg.paths,
                                     seed=cfg.seed, workers=cfg.workers)
    t0 = time.perf_counter()
    ends = simulate_paths(plan).at(tw)
    ref = reference_kernel(m, cfg.t)
    rows = []
    strip = None
    if "strip" in cfg.methods:
        strip = strip_from_endpoints(m, x, ends, grid, eps, cfg.t, diagonal=None,
                                     delta=plan.delta, seed=cfg.seed)
    rng = np.random.default_rng(derive_seed(cfg.seed, 1))
    direction = m.sample_tangent(x, 1.0, rng)
    direction = direction / m.norm(x, direction)
    for j, d0 in enumerate(grid):
        row = {"d0": float(d0)}
        if ref is not None:
            row["truth"] = float(ref(d0))
        if strip is not None:
            row.update(strip=float(strip.density[j]), strip_se=float(strip.stderr[j]),
                       strip_hits=int(strip.hits[j]))
        if "ball" in cfg.methods:
            y = m.exp(x, d0 * direction)
            b = ball_from_endpoints(m, ends, y, ball_eps)
            row.update(ball=b.density, ball_se=b.stderr, ball_hits=b.hits)
        rows.append(row)
    summary = {"manifold": repr(m), "t": cfg.t, "eps": eps, "ball_eps": ball_eps,
               "delta": plan.delta, "grid": [float(g) for g in grid],
               "elapsed_s": time.perf_counter() - t0}
    if ref is not None:
        truth = np.array([r["truth"] for r in rows])
        for meth in ("strip", "ball"):
            if meth in cfg.methods:
                est = np.array([r[meth] for r in rows])
                summary[f"{meth}_max_rel_err"] = float(np.max(np.abs(est - truth) / truth))
                summary[f"{meth}_rmse"] = gp.rmse(est, truth)
                se = np.array([r[f"{meth}_se"] for r in rows])
                with np.errstate(divide="ignore", invalid="ignore"):
                    z = np.abs(est - truth) / se
                summary[f"{meth}_frac_within_3se"] = float(np.mean(z <= 3))
    return rows, strip, summary


# ---------------------------------------------------------------------------
# efficiency ratios


def run_efficiency(cfg: ExperimentConfig):
    m = build_manifold(cfg)
    x = m.base_point()
    tw = cfg.t / m.diffusion_rate
    plan = SimulationPlan.from_steps(m, x, tw, cfg.steps, (tw,), n_paths=cfg.paths,
                                     seed=cfg.seed, workers=cfg.workers)
    ends = simulate_paths(plan).at(tw)
    y = point_at_distance(m, x, cfg.d0, np.random.default_rng(derive_seed(cfg.seed, 1)))
    rows = []
    for eps in cfg.eps_ladder:
        r = efficiency_from_endpoints(m, x, ends, cfg.d0, eps, y)
        rows.append({
            "eps": eps, "d0": cfg.d0, "strip_hits": r.strip_hits, "ball_hits": r.ball_hits,
            "ratio": r.ratio, "ratio_se": r.ratio_se, "volume_ratio": r.volume_ratio,
            "explicit_bound": explicit_ratio_bound(m.dim, eps), "censored": r.censored,
            "consistent": r.consistent,
        })
    ok = [r for r in rows if not r["censored"]]
    slope = loglog_slope([r["eps"] for r in ok], [r["ratio"] for r in ok]) if len(ok) > 1 else math.nan
    summary = {"manifold": repr(m), "dim": m.dim, "t": cfg.t, "d0": cfg.d0, "delta": plan.delta,
               "slope": slope, "expected_slope": 1 - m.dim,
               "censored": [r["eps"] for r in rows if r["censored"]]}
    return rows, summary


# ---------------------------------------------------------------------------
# torus knots


def check_coprime(p: int, q: int):
    if p < 1 or q < 1 or math.gcd(p, q) != 1:
        raise ValueError(f"knot ({p}, {q}) needs coprime positive integers")


def knot_embedding(p: int, q: int):
    """theta -> ((2 + cos q theta) cos p theta, (2 + cos q theta) sin p theta, sin q theta)."""

    def embed(theta):
        th = np.asarray(theta, dtype=float)
        r = 2.0 + np.cos(q * th)
        return np.stack([r * np.cos(p * th), r * np.sin(p * th), np.sin(q * th)], axis=-1)

    return embed


def knot_speed(p: int, q: int, theta):
    th = np.asarray(theta, dtype=float)
    r = 2.0 + np.cos(q * th)
    return np.sqrt((p * r) ** 2 + (q * np.sin(q * th)) ** 2 + (q * np.cos(q * th)) ** 2)


@dataclass(frozen=True)
class KnotGeometry:
    p: int
    q: int
    length: float
    _theta: np.ndarray
    _s: np.ndarray

    @classmethod
    def build(cls, p: int, q: int, n: int = 200001):
        check_coprime(p, q)
        L, _ = integrate.quad(lambda th: float(knot_speed(p, q, th)), 0, 2 * math.pi,
                              limit=500, epsabs=1e-12, epsrel=1e-12)
        th = np.linspace(0, 2 * math.pi, n)
        s = integrate.cumulative_trapezoid(knot_speed(p, q, th), th, initial=0.0)
        s *= L / s[-1]
        return cls(p, q, float(L), th, s)

    def arclength(self, theta) -> np.ndarray:
        th = np.mod(np.asarray(theta, dtype=float), 2 * math.pi)
        return np.interp(th, self._theta, self._s)

    def embed(self, theta) -> np.ndarray:
        return knot_embedding(self.p, self.q)(theta)


def knot_truth(M, theta):
    th = np.asarray(theta, dtype=float)
    X = np.stack([np.cos(th), np.sin(th)], axis=-1)
    return np.einsum("...i,ij,...j->...", X, M, X)


def fixed_pd_matrix(seed: int, n: int = 2) -> np.ndarray:
    G = np.random.default_rng(derive_seed(seed, 7)).standard_normal((n, n))
    return G @ G.T + 0.5 * np.eye(n)


def knot_kernels(geo: KnotGeometry, cfg: ExperimentConfig, seed: int):
    """Circle kernels of circumference equal to the knot length, for the scaled t-grid."""
    circ = Circle(geo.length)
    scale = (geo.length / (2 * math.pi)) ** 2
    ts = [t * scale for t in cfg.t_grid]
    if cfg.kernel == "exact":
        return circ, {t: ExactKernel(circ, t) for t in ts}
    grid, eps = default_strip_grid(circ, cfg.grid_size)
    profs = strip_profiles(circ, circ.base_point(), grid, ts, eps, cfg.paths, seed,
                           cfg.steps, diagonal=_diagonal(cfg), workers=cfg.workers)
    return circ, profs


def run_knot(cfg: ExperimentConfig):
    """Intrinsic (circle heat kernel on arclength) vs RBF on the R^3 embedding."""
    M = fixed_pd_matrix(cfg.seed)
    geos = [KnotGeometry.build(int(p), int(q)) for p, q in cfg.knots]
    kernels = {(g.p, g.q): knot_kernels(g, cfg, derive_seed(cfg.seed, 2)) for g in geos}
    rows = []
    for rep in range(cfg.replicates):
        rng = np.random.default_rng(derive_seed(cfg.seed, 3, rep))
        th_train = rng.uniform(0, 2 * math.pi, cfg.n_train)
        th_test = rng.uniform(0, 2 * math.pi, cfg.n_test)
        noise = cfg.noise_sd * rng.standard_normal(cfg.n_train)
        y = knot_truth(M, th_train) + noise
        f_test = knot_truth(M, th_test)
        for g in geos:
            circ, kern = kernels[(g.p, g.q)]
            s_train = g.arclength(th_train)[:, None]
            s_test = g.arclength(th_test)[:, None]
            model = gp.fit(gp.Dataset(circ, s_train, y), kern)
            mu, _ = gp.predict(model, s_test, full_cov=False)
            base = gp.fit_rbf(g.embed(th_train), y)
            mu_b, _ = base.predict(g.embed(th_test), full_cov=False)
            rows.append({
                "knot": f"{g.p},{g.q}", "replicate": rep,
                "intrinsic_rmse": gp.rmse(mu, f_test), "extrinsic_rmse": gp.rmse(mu_b, f_test),
                "t": model.t, "signal_var": model.signal_var, "noise_var": model.noise_var,
                "t_skipped": len(model.skipped), "rbf_lengthscale": base.lengthscale,
            })
    summary = {"M": M.tolist(), "lengths": {f"{g.p},{g.q}": g.length for g in geos},
               "table": _summarize(rows, "knot", ["intrinsic_rmse", "extrinsic_rmse"])}
    return rows, summary


def _summarize(rows, key, cols):
    out = {}
    for k in dict.fromkeys(r[key] for r in rows):
        sub = [r for r in rows if r[key] == k]
        out[k] = {c: {"mean": float(np.mean([r[c] for r in sub])),
                      "sd": float(np.std([r[c] for r in sub], ddof=1)) if len(sub) > 1 else 0.0}
                  for c in cols}
    return out


# ---------------------------------------------------------------------------
# complex projective regression


def random_pd_hermitian(rng, n: int) -> np.ndarray:
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return G @ G.conj().T / n + 0.1 * np.eye(n)


def projective_truth(M, U):
    return np.real(np.einsum("...i,ij,...j->...", np.conj(U), M, U))


def run_projective(cfg: ExperimentConfig):
    """Strip-kernel GP on complex projective space vs RBF on u u^* coordinates."""
    m = build_manifold(cfg)
    if not isinstance(m, ComplexProjective):
        raise ValueError("projective experiment needs a complex projective manifold")
    grid, eps = _grid_and_eps(cfg, m)
    if cfg.kernel == "exact":
        kern = {t: ExactKernel(m, t) for t in cfg.t_grid}
    else:
        kern = strip_profiles(m, m.base_point(), grid, list(cfg.t_grid), eps, cfg.paths,
                              derive_seed(cfg.seed, 2), cfg.steps, diagonal=_diagonal(cfg),
                              workers=cfg.workers)
    D = (m.m + 1) ** 2
    rows = []
    for rep in range(cfg.replicates):
        rng = np.random.default_rng(derive_seed(cfg.seed, 3, rep))
        M = random_pd_hermitian(rng, m.m + 1)
        U = m.random_point(rng, cfg.n_train)
        Ut = m.random_point(rng, cfg.n_test)
        y = projective_truth(M, U) + cfg.noise_sd * rng.standard_normal(cfg.n_train)
        f_test = projective_truth(M, Ut)
        G = rng.standard_normal((D, D))
        model = gp.fit(gp.Dataset(m, U, y), kern)
        mu, _ = gp.predict(model, Ut, full_cov=False)
        row = {"replicate": rep, "intrinsic_rmse": gp.rmse(mu, f_test), "t": model.t,
               "t_skipped": len(model.skipped)}
        data = gp.Dataset(m, U, y)
        for name, tr in (("embed", None), ("embed_scaled", 0.01), ("embed_matrix", G)):
            b = gp.rbf_embedding_baseline(data, gp.projector_embedding, tr)
            mb, _ = b.predict(Ut, full_cov=False)
            row[f"{name}_rmse"] = gp.rmse(mb, f_test)
            row[f"{name}_lengthscale"] = b.lengthscale
        rows.append(row)
    cols = ["intrinsic_rmse", "embed_rmse", "embed_scaled_rmse", "embed_matrix_rmse"]
    summary = {"eps": eps, "grid": [float(g) for g in grid],
               "table": {c: {"mean": float(np.mean([r[c] for r in rows])),
                             "sd": float(np.std([r[c] for r in rows], ddof=1)) if len(rows) > 1 else 0.0}
                         for c in cols}}
    return rows, summary
