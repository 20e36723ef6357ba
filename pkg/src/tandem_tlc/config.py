"""Experiment files: YAML (or JSON) with strict keys and filled defaults.

A file looks like::

    recipe: optimize
    seed: 3
    bounds: {theta_min: 15, theta_max: 40}
    sim: {weights: [10, 1, 1, 1], horizon: 1000}
    optimizer: {theta0: [25, 30, 30, 25], max_iter: 300}

Every section is optional.  A run manifest is accepted too; its resolved
spec is used as is.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .baseline import GridSpec
from .ipa import RateEstimatorConfig
from .model import ThetaVector
from .optimizer import OptimizerConfig
from .sim import SimConfig

RECIPES = ("simulate", "gradient", "optimize", "brute-force", "fd-check", "sweep-T2",
           "sweep-arrival")

DEFAULTS: dict = {
    "recipe": "simulate",
    "seed": 0,
    "bounds": {"theta_min": 15.0, "theta_max": 40.0},
    "sim": {
        "theta": [15.0, 15.0, 15.0, 15.0],
        "horizon": 1000.0,
        "arrival_rates": [0.25, 0.25, 0.25],
        "service_rates": [1.0, 1.0, 1.0, 1.0],
        "weights": [1.0, 1.0, 1.0, 1.0],
        "backend": "discrete",
        "hold_mean": 50.0,
        "level_range": [0.0, 2.0],
        "initial_green": [1, 3],
        "x0": [0.0, 0.0, 0.0, 0.0],
    },
    "optimizer": {
        "theta0": [25.0, 30.0, 30.0, 25.0],
        "c": None,
        "decay": 0.6,
        "max_iter": 300,
        "tol": 0.01,
        "stable_iters": 5,
        "paths": 1,
        "coupling": None,
        "first_step": 2.0,
        "eval_reps": 10,
    },
    "rate_estimator": {"window": 30.0, "direction": "symmetric", "known_service": True},
    "grid": {"step": 1.0, "reps": 10, "coupling": None},
    "gradient": {"paths": 1},
    "fd": {"delta": 0.01, "mode": "common", "paths": 5},
    "sweep": {
        "T1": 44.0,
        "T2_values": [36.0, 40.0, 44.0, 48.0, 52.0],
        "r_values": [2, 3, 4, 5, 6],
    },
}

MANIFEST_KEYS = {"recipe", "resolved_spec", "seed", "version", "status", "error", "outputs",
                 "started", "finished", "command", "summary"}


class SpecError(ValueError):
    """Invalid experiment file; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentSpec:
    recipe: str
    seed: int
    sim: SimConfig
    optimizer: OptimizerConfig
    grid: GridSpec
    rates: RateEstimatorConfig
    raw: dict                   # fully resolved plain-data form

    def section(self, name: str) -> dict:
        return self.raw[name]


def _merge(defaults: dict, given: Any, where: str) -> dict:
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(given, dict):
        raise SpecError(f"{where or 'spec'}: expected a mapping, got {type(given).__name__}")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        prefix = f"{where}." if where else ""
        raise SpecError(f"unknown key(s): {', '.join(prefix + k for k in unknown)}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, f"{where}.{key}" if where else key)
        else:
            out[key] = value
    return out


def _number(raw: dict, path: str, positive=False, nonneg=False) -> float:
    section, key = path.split(".")
    v = raw[section][key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SpecError(f"{path} must be a finite number (seconds or veh/s), got {v!r}")
    if positive and v <= 0:
        raise SpecError(f"{path} must be > 0, got {v}")
    if nonneg and v < 0:
        raise SpecError(f"{path} must be >= 0, got {v}")
    return float(v)


def _vector(raw: dict, path: str, size: int, nonneg=True) -> tuple:
    section, key = path.split(".")
    v = raw[section][key]
    if not isinstance(v, (list, tuple)) or len(v) != size:
        raise SpecError(f"{path} must be a list of {size} numbers, got {v!r}")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise SpecError(f"{path} entries must be finite numbers, got {x!r}")
        if nonneg and x < 0:
            raise SpecError(f"{path} entries must be >= 0, got {x}")
        out.append(float(x))
    return tuple(out)


def _build(raw: dict) -> ExperimentSpec:
    recipe = raw["recipe"]
    if recipe not in RECIPES:
        raise SpecError(f"recipe must be one of {', '.join(RECIPES)}, got {recipe!r}")
    seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise SpecError(f"seed must be a non-negative integer, got {seed!r}")

    lo = _number(raw, "bounds.theta_min", positive=True)
    hi = _number(raw, "bounds.theta_max", positive=True)
    if hi < lo:
        raise SpecError(f"bounds.theta_max ({hi}) is below bounds.theta_min ({lo})")
    if hi == lo:
        raise SpecError(f"bounds.theta_max must exceed bounds.theta_min, both are {lo}")

    s = raw["sim"]
    hold = s["hold_mean"]
    if hold is not None:
        hold = _number(raw, "sim.hold_mean", positive=True)
    try:
        sim = SimConfig(
            theta=ThetaVector(_vector(raw, "sim.theta", 4), lo, hi),
            horizon=_number(raw, "sim.horizon", positive=True),
            arrival_rates=_vector(raw, "sim.arrival_rates", 3),
            service_rates=_vector(raw, "sim.service_rates", 4),
            weights=_vector(raw, "sim.weights", 4),
            backend=s["backend"],
            seed=seed,
            hold_mean=hold,
            level_range=_vector(raw, "sim.level_range", 2),
            initial_green=tuple(s["initial_green"]),
            x0=_vector(raw, "sim.x0", 4),
        )
    except SpecError:
        raise
    except (ValueError, TypeError) as exc:
        raise SpecError(f"sim: {exc}") from None

    r = raw["rate_estimator"]
    try:
        rates = RateEstimatorConfig(window=_number(raw, "rate_estimator.window", positive=True),
                                    direction=r["direction"],
                                    known_service=bool(r["known_service"]))
    except SpecError:
        raise
    except ValueError as exc:
        raise SpecError(f"rate_estimator: {exc}") from None

    o = raw["optimizer"]
    coupling = o["coupling"]
    if coupling is not None:
        coupling = _vector(raw, "optimizer.coupling", 2)
    c = o["c"]
    if c is not None:
        c = _number(raw, "optimizer.c", positive=True)
    for key in ("max_iter", "stable_iters", "paths", "eval_reps"):
        v = o[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise SpecError(f"optimizer.{key} must be a positive integer, got {v!r}")
    try:
        opt = OptimizerConfig(
            theta0=_vector(raw, "optimizer.theta0", 4), lower=lo, upper=hi, c=c,
            decay=_number(raw, "optimizer.decay", positive=True), max_iter=o["max_iter"],
            tol=_number(raw, "optimizer.tol", positive=True), stable_iters=o["stable_iters"],
            paths=o["paths"], coupling=coupling,
            first_step=_number(raw, "optimizer.first_step", positive=True), rates=rates)
    except ValueError as exc:
        raise SpecError(f"optimizer: {exc}") from None

    g = raw["grid"]
    step = _number(raw, "grid.step", positive=True)
    gc = g["coupling"]
    if gc is not None:
        gc = _vector(raw, "grid.coupling", 2)
    reps = g["reps"]
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise SpecError(f"grid.reps must be a positive integer, got {reps!r}")
    try:
        grid = GridSpec(ranges=((lo, hi, step),) * 4, reps=reps, coupling=gc, lower=lo, upper=hi)
    except ValueError as exc:
        raise SpecError(f"grid: {exc}") from None

    for key in ("paths",):
        v = raw["gradient"][key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise SpecError(f"gradient.{key} must be a positive integer, got {v!r}")
    _number(raw, "fd.delta", positive=True)
    if raw["fd"]["mode"] not in ("common", "independent"):
        raise SpecError(f"fd.mode must be 'common' or 'independent', got {raw['fd']['mode']!r}")
    v = raw["fd"]["paths"]
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise SpecError(f"fd.paths must be a positive integer, got {v!r}")

    T1 = _number(raw, "sweep.T1", positive=True)
    for key in ("T2_values", "r_values"):
        vals = raw["sweep"][key]
        if not isinstance(vals, list) or not vals:
            raise SpecError(f"sweep.{key} must be a non-empty list")
    for total in [T1] + [float(v) for v in raw["sweep"]["T2_values"]]:
        if not 2 * lo <= total <= 2 * hi:
            raise SpecError(f"sweep cycle total {total} cannot be split within "
                            f"[bounds.theta_min, bounds.theta_max] = [{lo}, {hi}]")
    for rv in raw["sweep"]["r_values"]:
        if isinstance(rv, bool) or not isinstance(rv, (int, float)) or not rv > 0:
            raise SpecError(f"sweep.r_values entries must be > 0, got {rv!r}")

    return ExperimentSpec(recipe, seed, sim, opt, grid, rates, raw)


def resolve(data: Optional[dict], recipe: Optional[str] = None,
            seed: Optional[int] = None) -> ExperimentSpec:
    """Fill defaults into plain data, apply overrides and validate."""
    raw = _merge(DEFAULTS, data or {}, "")
    if recipe is not None:
        raw["recipe"] = recipe
    if seed is not None:
        raw["seed"] = seed
    return _build(raw)


def load_data(path) -> Optional[dict]:
    """Parse a spec or manifest file into plain data (manifests unwrap)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise SpecError(f"{path}: malformed spec{where}: {getattr(exc, 'problem', exc)}") from None
    if isinstance(data, dict) and "resolved_spec" in data:
        unknown = sorted(set(data) - MANIFEST_KEYS)
        if unknown:
            raise SpecError(f"unknown manifest key(s): {', '.join(unknown)}")
        data = data["resolved_spec"]
    return data


def validate_spec(path, recipe: Optional[str] = None, seed: Optional[int] = None) -> ExperimentSpec:
    """Read, default-fill and check an experiment file."""
    return resolve(load_data(path), recipe, seed)


def dumps(spec: ExperimentSpec) -> str:
    return json.dumps(spec.raw, indent=2, sort_keys=True)


__all__ = ["ExperimentSpec", "SpecError", "RECIPES", "DEFAULTS", "resolve", "validate_spec",
           "load_data"]
