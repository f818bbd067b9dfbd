"""Command-line front end.

    heatgp estimate   [--config PATH] [--seed S] [--out DIR] [--paths N] [--steps T] [--eps E]
    heatgp efficiency ...
    heatgp knot       ... [--replicates R]
    heatgp projective ... [--replicates R]
    heatgp simulate   ...

Exit codes: 0 success, 2 configuration error, 3 estimation failure (no hits),
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .brownian import SimulationPlan, simulate_paths, write_endpoints_csv
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .gp import NumericalError
from .heatkernel import EstimationError

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION, EXIT_NUMERICAL = 0, 2, 3, 4


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_rows(path: Path, rows: list[dict], meta: dict) -> None:
    """CSV with a fixed column order; metadata is repeated in trailing columns."""
    buf = io.StringIO()
    cols = list(dict.fromkeys(k for r in rows for k in r))
    meta_cols = sorted(meta)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols + meta_cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols] + [_fmt(meta[c]) for c in meta_cols])
    atomic_write(path, buf.getvalue())


def write_json(path: Path, obj: dict) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_fmt) + "\n")


def _meta(cfg: ExperimentConfig) -> dict:
    return {"seed": cfg.seed, "N": cfg.paths, "steps": cfg.steps, "version": __version__}


def _diag(cfg):
    return None if cfg.diagonal == "none" else cfg.diagonal


def cmd_estimate(cfg: ExperimentConfig, out: Path) -> dict:
    rows, strip, summary = experiments.run_estimate(cfg)
    meta = _meta(cfg) | {"t": cfg.t, "eps": summary["eps"], "delta": summary["delta"],
                         "manifold": summary["manifold"]}
    write_rows(out / "comparison.csv", rows, meta)
    if strip is not None:
        prof = [{"d0": d, "density": p, "stderr": s, "hits": k}
                for d, p, s, k in zip(strip.d0, strip.density, strip.stderr, strip.hits)]
        write_rows(out / "profile.csv", prof, meta)
    return summary


def cmd_efficiency(cfg: ExperimentConfig, out: Path) -> dict:
    rows, summary = experiments.run_efficiency(cfg)
    write_rows(out / "efficiency.csv", rows, _meta(cfg) | {"t": cfg.t, "delta": summary["delta"],
                                                         "manifold": summary["manifold"]})
    return summary


def cmd_knot(cfg: ExperimentConfig, out: Path) -> dict:
    rows, summary = experiments.run_knot(cfg)
    write_rows(out / "knot_rmse.csv", rows, _meta(cfg) | {"noise_sd": cfg.noise_sd,
                                                        "n_train": cfg.n_train})
    table = [{"knot": k, "extrinsic_mean": v["extrinsic_rmse"]["mean"],
              "extrinsic_sd": v["extrinsic_rmse"]["sd"], "intrinsic_mean": v["intrinsic_rmse"]["mean"],
              "intrinsic_sd": v["intrinsic_rmse"]["sd"]} for k, v in summary["table"].items()]
    write_rows(out / "knot_table.csv", table, _meta(cfg))
    return summary


def cmd_projective(cfg: ExperimentConfig, out: Path) -> dict:
    rows, summary = experiments.run_projective(cfg)
    write_rows(out / "projective_rmse.csv", rows, _meta(cfg) | {"noise_sd": cfg.noise_sd,
                                                              "n_train": cfg.n_train})
    table = [{"method": k, "mean": v["mean"], "sd": v["sd"]} for k, v in summary["table"].items()]
    write_rows(out / "projective_table.csv", table, _meta(cfg))
    return summary


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    m = experiments.build_manifold(cfg)
    tw = cfg.t / m.diffusion_rate
    cps = [c / m.diffusion_rate for c in cfg.checkpoints] if cfg.checkpoints else [tw]
    plan = SimulationPlan.from_steps(m, m.base_point(), tw, cfg.steps, cps, n_paths=cfg.paths,
                                     seed=cfg.seed, workers=cfg.workers)
    batch = simulate_paths(plan)
    out.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".endpoints.")
    os.close(fd)
    write_endpoints_csv(batch, tmp)
    os.replace(tmp, out / "endpoints.csv")
    return {"manifold": repr(m), "delta": plan.delta, "checkpoints": list(plan.checkpoints)}


COMMANDS = {
    "estimate": cmd_estimate,
    "efficiency": cmd_efficiency,
    "knot": cmd_knot,
    "projective": cmd_projective,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatgp", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=Path)
        s.add_argument("--paths", type=int)
        s.add_argument("--steps", type=int)
        s.add_argument("--eps", type=float)
        s.add_argument("--replicates", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("seed", "paths", "steps", "eps", "replicates")}
    try:
        cfg = load_config(args.config, args.command, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path(cfg.out)
    t0 = time.perf_counter()
    try:
        summary = COMMANDS[args.command](cfg, out)
    except EstimationError as exc:
        print(f"estimation failed: {exc}\nhint: increase --paths or --eps", file=sys.stderr)
        return EXIT_ESTIMATION
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = {"command": args.command, "version": __version__,
               "config": cfg.__dict__, "runtime_s": time.perf_counter() - t0} | summary
    write_json(out / "summary.json", summary)
    print(json.dumps({k: v for k, v in summary.items() if k not in ("config",)},
                     indent=2, sort_keys=True, default=_fmt))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
