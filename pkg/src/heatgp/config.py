"""Experiment configuration: YAML file plus command-line overrides, validated up front."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import yaml

EXPERIMENTS = ("estimate", "knot", "projective", "efficiency", "simulate")


class ConfigError(ValueError):
    """Invalid configuration; the message names the field and, when known, the line."""


@dataclass
class ExperimentConfig:
    experiment: str = "estimate"
    manifold: dict = field(default_factory=lambda: {"kind": "euclidean", "d": 1})
    paths: int = 20000
    steps: int = 100
    t: float = 1.0
    t_grid: list = field(default_factory=lambda: [0.1, 0.2, 0.5, 1.0, 2.0])
    eps: float | None = None
    ball_eps: float | None = None
    grid: list | None = None
    grid_size: int = 25
    methods: list = field(default_factory=lambda: ["strip", "ball"])
    diagonal: str = "ball"
    kernel: str = "strip"
    eps_ladder: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    d0: float = 1.0
    checkpoints: list | None = None
    replicates: int = 10
    seed: int = 0
    n_train: int = 30
    n_test: int = 200
    noise_sd: float = 0.1
    knots: list = field(default_factory=lambda: [[2, 3], [4, 3], [9, 8]])
    workers: int = 1
    out: str = "results"


# per-experiment defaults applied before the file and flags
DEFAULTS = {
    "estimate": {},
    "efficiency": {"manifold": {"kind": "euclidean", "d": 2}},
    "simulate": {"paths": 1000, "manifold": {"kind": "sphere", "m": 2}},
    "knot": {
        "manifold": {"kind": "circle"},
        "t_grid": [0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.4, 2.0, 3.0, 4.0],
    },
    "projective": {
        "manifold": {"kind": "cp", "m": 4},
        "n_train": 10,
        "n_test": 100,
        "diagonal": "extrapolate",
        "t_grid": [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.6, 0.8],
    },
}

_POSITIVE_INT = ("paths", "steps", "grid_size", "replicates", "n_train", "n_test", "workers")
_POSITIVE_FLOAT = ("t", "eps", "ball_eps", "d0")


def _key_lines(text: str) -> dict:
    """Line number (1-based) of every top-level key in a YAML mapping."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _err(name, msg, lines):
    where = f" (line {lines[name]})" if name in lines else ""
    return ConfigError(f"config field '{name}'{where}: {msg}")


def _validate(cfg: ExperimentConfig, lines: dict) -> ExperimentConfig:
    if cfg.experiment not in EXPERIMENTS:
        raise _err("experiment", f"must be one of {EXPERIMENTS}", lines)
    for name in _POSITIVE_INT:
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise _err(name, f"must be a positive integer, got {v!r}", lines)
    for name in _POSITIVE_FLOAT:
        v = getattr(cfg, name)
        if v is None and name in ("eps", "ball_eps"):
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
            raise _err(name, f"must be a positive number, got {v!r}", lines)
        setattr(cfg, name, float(v))
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise _err("seed", "must be an unsigned 64-bit integer", lines)
    if isinstance(cfg.noise_sd, bool) or not isinstance(cfg.noise_sd, (int, float)) or cfg.noise_sd < 0:
        raise _err("noise_sd", "must be a non-negative number", lines)
    for name in ("t_grid", "eps_ladder", "grid", "checkpoints"):
        v = getattr(cfg, name)
        if v is None and name in ("grid", "checkpoints"):
            continue
        if not isinstance(v, list) or not v or not all(
            isinstance(a, (int, float)) and not isinstance(a, bool) and a > 0 for a in v
        ):
            raise _err(name, "must be a non-empty list of positive numbers", lines)
        setattr(cfg, name, [float(a) for a in v])
    if not isinstance(cfg.manifold, dict) or "kind" not in cfg.manifold:
        raise _err("manifold", "must be a mapping with a 'kind' entry", lines)
    for k, v in cfg.manifold.items():
        if isinstance(v, (int, float)) and not isinstance(v, bool) and v <= 0:
            raise _err("manifold", f"parameter {k!r} must be positive", lines)
    if not set(cfg.methods) <= {"strip", "ball"} or not cfg.methods:
        raise _err("methods", "must be a non-empty subset of [strip, ball]", lines)
    if cfg.diagonal not in ("ball", "extrapolate", "none"):
        raise _err("diagonal", "must be ball, extrapolate or none", lines)
    if cfg.kernel not in ("strip", "exact"):
        raise _err("kernel", "must be strip or exact", lines)
    if not isinstance(cfg.knots, list) or not all(
        isinstance(k, list) and len(k) == 2 and all(isinstance(a, int) and a > 0 for a in k)
        and math.gcd(*k) == 1
        for k in cfg.knots
    ):
        raise _err("knots", "must be a list of coprime positive [p, q] pairs", lines)
    try:
        from .matman import make_manifold

        params = dict(cfg.manifold)
        make_manifold(params.pop("kind"), **params)
    except (ValueError, TypeError) as exc:
        raise _err("manifold", str(exc), lines) from None
    return cfg


def load_config(path=None, experiment: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge per-experiment defaults, the YAML file at ``path`` and ``overrides``, then validate."""
    data, lines = {}, {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping at the top level")
        lines = _key_lines(text)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for k in data:
        if k not in known:
            raise _err(k, "unknown field", lines)
    kind = experiment or data.get("experiment") or "estimate"
    if experiment and data.get("experiment") not in (None, experiment):
        raise _err("experiment", f"file says {data['experiment']!r} but command is {experiment!r}", lines)
    merged = dict(DEFAULTS.get(kind, {}))
    merged.update(data)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    merged["experiment"] = kind
    return _validate(ExperimentConfig(**merged), lines)
