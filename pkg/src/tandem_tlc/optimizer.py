"""Projected stochastic gradient descent on the green lengths."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .ipa import RateEstimatorConfig, run_ipa
from .sim import SimConfig, seed_bank, simulate

TRAJECTORY_COLUMNS = ("k", "theta1", "theta2", "theta3", "theta4", "J_hat",
                      "g1", "g2", "g3", "g4", "gamma_k")


@dataclass(frozen=True)
class OptimizerConfig:
    """Step size ``gamma_k = c / (k + 1) ** decay``.

    ``c=None`` picks c after the first gradient so that no coordinate moves
    more than ``first_step`` seconds.  ``coupling=(T1, T2)`` keeps
    theta1 + theta2 = T1 and theta3 + theta4 = T2.
    """

    theta0: tuple = (25.0, 30.0, 30.0, 25.0)
    lower: float = 15.0
    upper: float = 40.0
    c: Optional[float] = None
    decay: float = 0.6
    max_iter: int = 300
    tol: float = 0.01
    stable_iters: int = 5
    paths: int = 1
    coupling: Optional[tuple] = None
    first_step: float = 2.0
    rates: RateEstimatorConfig = field(default_factory=RateEstimatorConfig)

    def __post_init__(self):
        theta0 = tuple(float(v) for v in self.theta0)
        if len(theta0) != 4:
            raise ValueError("theta0 needs 4 entries")
        object.__setattr__(self, "theta0", theta0)
        if not self.lower < self.upper:
            raise ValueError(f"lower ({self.lower}) must be below upper ({self.upper})")
        if any(not self.lower <= v <= self.upper for v in theta0):
            raise ValueError(f"theta0 {theta0} outside [{self.lower}, {self.upper}]")
        if self.c is not None and not self.c > 0:
            raise ValueError("c must be > 0")
        if not 0.5 < self.decay <= 1:
            raise ValueError("decay must lie in (0.5, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1 or self.paths < 1 or self.stable_iters < 1:
            raise ValueError("max_iter, paths and stable_iters must be >= 1")
        if not self.first_step > 0:
            raise ValueError("first_step must be > 0")
        if self.coupling is not None:
            T1, T2 = (float(v) for v in self.coupling)
            object.__setattr__(self, "coupling", (T1, T2))
            for name, total in (("T1", T1), ("T2", T2)):
                if not 2 * self.lower <= total <= 2 * self.upper:
                    raise ValueError(f"{name}={total} cannot be split within the bounds")
            if not (math.isclose(theta0[0] + theta0[1], T1) and math.isclose(theta0[2] + theta0[3], T2)):
                raise ValueError(f"theta0 {theta0} violates theta1+theta2={T1}, theta3+theta4={T2}")

    def free_bounds(self):
        """Bounds of (theta1, theta3) under coupling."""
        T1, T2 = self.coupling
        return ((max(self.lower, T1 - self.upper), min(self.upper, T1 - self.lower)),
                (max(self.lower, T2 - self.upper), min(self.upper, T2 - self.lower)))


@dataclass
class OptimizationTrajectory:
    k: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    J: list = field(default_factory=list)
    gradient: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    stop_reason: str = ""

    @property
    def theta_final(self) -> np.ndarray:
        return np.asarray(self.theta[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_COLUMNS)
            for k, th, J, g, gam in zip(self.k, self.theta, self.J, self.gradient, self.gamma):
                w.writerow([k] + [f"{v:.9f}" for v in th] + [f"{J:.9f}"]
                           + [f"{v:.9f}" for v in g] + [f"{gam:.9f}"])


def _direction(g: np.ndarray, cfg: OptimizerConfig) -> np.ndarray:
    """Gradient actually followed: the reduced one under coupling."""
    if cfg.coupling is None:
        return g
    return np.array([g[0] - g[1], 0.0, g[2] - g[3], 0.0])


def step_size(k: int, cfg: OptimizerConfig) -> float:
    return cfg.c / (k + 1) ** cfg.decay


def sgd_step(theta, g, k: int, cfg: OptimizerConfig) -> np.ndarray:
    """One projected step; needs ``cfg.c`` set."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError(f"non-finite gradient {g} at iteration {k}")
    if cfg.c is None:
        raise ValueError("sgd_step needs a concrete step constant c")
    theta = np.asarray(theta, dtype=np.float64)
    gamma = step_size(k, cfg)
    if cfg.coupling is None:
        return np.clip(theta - gamma * g, cfg.lower, cfg.upper)
    d = _direction(g, cfg)
    (lo1, hi1), (lo3, hi3) = cfg.free_bounds()
    T1, T2 = cfg.coupling
    t1 = min(max(theta[0] - gamma * d[0], lo1), hi1)
    t3 = min(max(theta[2] - gamma * d[2], lo3), hi3)
    return np.array([t1, T1 - t1, t3, T2 - t3])


def _iteration_seeds(master: int, count: int) -> np.ndarray:
    return np.random.SeedSequence([int(master), 7]).generate_state(count, dtype=np.uint32)


def optimize(sim_cfg: SimConfig, opt_cfg: OptimizerConfig) -> OptimizationTrajectory:
    """Run SGD from ``opt_cfg.theta0``; fresh paths every iteration."""
    seeds = _iteration_seeds(sim_cfg.seed, opt_cfg.max_iter * opt_cfg.paths)
    seeds = seeds.reshape(opt_cfg.max_iter, opt_cfg.paths)
    traj = OptimizationTrajectory()
    theta = np.array(opt_cfg.theta0)
    cfg = opt_cfg
    stable = 0
    for k in range(opt_cfg.max_iter):
        Ls, gs = [], []
        for s in seeds[k]:
            run = sim_cfg.with_theta(theta).with_seed(int(s))
            res = simulate(run)
            Ls.append(res.L)
            gs.append(run_ipa(res.trace, run.weights, opt_cfg.rates).dL)
        g = np.mean(gs, axis=0)
        if cfg.c is None:
            scale = float(np.max(np.abs(_direction(g, cfg))))
            cfg = replace(cfg, c=cfg.first_step / scale if scale > 0 else cfg.first_step)
        traj.k.append(k)
        traj.theta.append(theta.copy())
        traj.J.append(float(np.mean(Ls)))
        traj.gradient.append(g)
        traj.gamma.append(step_size(k, cfg))
        try:
            new = sgd_step(theta, g, k, cfg)
        except FloatingPointError as exc:
            traj.stop_reason = f"aborted: {exc}"
            return traj
        stable = stable + 1 if np.max(np.abs(new - theta)) < cfg.tol else 0
        theta = new
        if stable >= cfg.stable_iters:
            traj.stop_reason = "converged"
            break
    else:
        traj.stop_reason = "max_iter"
    traj.theta.append(theta.copy())
    traj.k.append(len(traj.k))
    traj.J.append(float("nan"))
    traj.gradient.append(np.full(4, np.nan))
    traj.gamma.append(float("nan"))
    return traj


def estimate_J(sim_cfg: SimConfig, theta, reps: int = 10, seeds=None):
    """Mean and standard error of L over ``reps`` paths.

    The seeds come from a bank fixed by ``sim_cfg.seed`` unless given, so two
    calls with the same config compare the same realizations.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if seeds is None:
        seeds = seed_bank(sim_cfg.seed, reps)
    base = sim_cfg.with_theta(theta)
    Ls = np.array([simulate(base.with_seed(int(s))).L for s in seeds[:reps]])
    err = float(Ls.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return float(Ls.mean()), err
