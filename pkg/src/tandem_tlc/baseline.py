"""Brute-force grid search and finite-difference gradients.

Both serve as references for the IPA optimizer.  On the discrete backend
the grid search splits the cost by queue: queues 1 and 2 only see the
timing of intersection 1, queue 4 only that of intersection 2, and queue 3
needs queue 1's departures plus intersection 2's timing.  Each piece is
computed once per distinct timing and recombined, which turns a 26^4 grid
into two 26^2 passes plus one compiled double loop.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kernels import discrete as _dk
from .optimizer import estimate_J
from .sim import SimConfig, _green_windows, discrete_arrivals, seed_bank, simulate

TABLE_COLUMNS = ("theta1", "theta2", "theta3", "theta4", "J_mean", "J_stderr", "reps")


@dataclass(frozen=True)
class GridSpec:
    """Per-coordinate ``(start, stop, step)`` ranges, stop inclusive.

    Under ``coupling=(T1, T2)`` only the ranges of theta1 and theta3 are
    used and theta2, theta4 follow from the cycle totals.
    """

    ranges: tuple = ((15.0, 40.0, 1.0),) * 4
    reps: int = 10
    coupling: Optional[tuple] = None
    lower: float = 15.0
    upper: float = 40.0

    def __post_init__(self):
        if len(self.ranges) != 4:
            raise ValueError("ranges needs one (start, stop, step) per coordinate")
        for i, (a, b, step) in enumerate(self.ranges, 1):
            if not step > 0:
                raise ValueError(f"theta{i} step must be > 0")
            if not self.lower <= a <= b <= self.upper:
                raise ValueError(f"theta{i} range [{a}, {b}] outside [{self.lower}, {self.upper}]")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")

    def axis(self, i: int) -> np.ndarray:
        a, b, step = self.ranges[i]
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return a + step * np.arange(n)

    def pairs(self, inter: int) -> np.ndarray:
        """Distinct (theta_lead, theta_cross) settings of one intersection."""
        i = 2 * inter
        if self.coupling is None:
            return np.array(list(itertools.product(self.axis(i), self.axis(i + 1))))
        total = self.coupling[inter]
        lead = self.axis(i)
        cross = total - lead
        keep = (cross >= self.lower - 1e-9) & (cross <= self.upper + 1e-9)
        return np.column_stack((lead[keep], cross[keep]))

    def points(self) -> np.ndarray:
        p12, p34 = self.pairs(0), self.pairs(1)
        return np.array([(*a, *b) for a in p12 for b in p34])


@dataclass
class GridResult:
    theta_best: np.ndarray
    J_best: float
    table: np.ndarray          # columns as TABLE_COLUMNS

    def to_csv(self, path) -> None:
        write_table(path, self.table)


def write_table(path, table: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for row in table:
            w.writerow([f"{v:.9f}" for v in row[:6]] + [int(row[6])])


def _pad(rows, width=None):
    width = width or max([r.size for r in rows] + [1])
    out = np.full((len(rows), width), np.inf)
    for i, r in enumerate(rows):
        out[i, : r.size] = r
    return out


def _discrete_areas(sim_cfg: SimConfig, grid: GridSpec, seeds) -> np.ndarray:
    """Per-queue integrals, shape (P12, P34, R, 4)."""
    T = sim_cfg.horizon
    d = 1.0 / np.array(sim_cfg.service_rates)
    arrivals = [discrete_arrivals(sim_cfg.with_seed(int(s))) for s in seeds]
    R = len(seeds)
    p12, p34 = grid.pairs(0), grid.pairs(1)
    probe = sim_cfg.theta.as_array()

    a1 = np.zeros((len(p12), R))
    a2 = np.zeros((len(p12), R))
    dep1, n1 = [], np.zeros((len(p12), R), dtype=np.int64)
    for p, (ta, tb) in enumerate(p12):
        win = _green_windows(sim_cfg.with_theta((ta, tb, probe[2], probe[3])))
        row = []
        for r, arr in enumerate(arrivals):
            d1 = _dk.serve(arr[1], win[0][0], win[0][1], d[0])
            a1[p, r] = _dk.area(arr[1], d1, T)
            a2[p, r] = _dk.area(arr[2], _dk.serve(arr[2], win[1][0], win[1][1], d[1]), T)
            kept = d1[d1 < T]
            n1[p, r] = kept.size
            row.append(kept)
        dep1.append(row)
    width = max([1] + [x.size for row in dep1 for x in row])
    dep1_arr = np.stack([_pad(row, width) for row in dep1])

    a4 = np.zeros((len(p34), R))
    g3s, g3e = [], []
    for q, (tc, td) in enumerate(p34):
        win = _green_windows(sim_cfg.with_theta((probe[0], probe[1], tc, td)))
        g3s.append(win[2][0])
        g3e.append(win[2][1])
        for r, arr in enumerate(arrivals):
            a4[q, r] = _dk.area(arr[4], _dk.serve(arr[4], win[3][0], win[3][1], d[3]), T)
    g3n = np.array([g.size for g in g3s], dtype=np.int64)
    a3 = _dk.queue3_area_table(dep1_arr, n1, _pad(g3s), _pad(g3e), g3n, d[2], T)

    out = np.empty((len(p12), len(p34), R, 4))
    out[..., 0] = a1[:, None, :]
    out[..., 1] = a2[:, None, :]
    out[..., 2] = a3
    out[..., 3] = a4[None, :, :]
    return out


def grid_costs(sim_cfg: SimConfig, grid: GridSpec, seeds=None) -> tuple:
    """(points, per-seed costs) over the whole grid; costs have shape (P, R)."""
    if seeds is None:
        seeds = seed_bank(sim_cfg.seed, grid.reps)
    seeds = np.asarray(seeds)[: grid.reps]
    points = grid.points()
    if len(points) == 0:
        raise ValueError("grid is empty")
    w = np.array(sim_cfg.weights)
    if sim_cfg.backend == "discrete":
        areas = _discrete_areas(sim_cfg, grid, seeds)
        costs = (areas @ w / sim_cfg.horizon).reshape(len(points), len(seeds))
    else:
        costs = np.array([[simulate(sim_cfg.with_theta(th).with_seed(int(s))).L for s in seeds]
                          for th in points])
    return points, costs


def grid_search(sim_cfg: SimConfig, grid: GridSpec, seeds=None) -> GridResult:
    """Exhaustive search; ties go to the lexicographically smallest theta."""
    points, costs = grid_costs(sim_cfg, grid, seeds)
    reps = costs.shape[1]
    mean = costs.mean(axis=1)
    err = costs.std(axis=1, ddof=1) / math.sqrt(reps) if reps > 1 else np.zeros(len(points))
    order = np.lexsort(tuple(points[:, i] for i in (3, 2, 1, 0)))
    points, mean, err = points[order], mean[order], err[order]
    best = int(np.argmin(mean))   # first minimum = lexicographically smallest
    table = np.column_stack((points, mean, err, np.full(len(points), reps)))
    return GridResult(points[best].copy(), float(mean[best]), table)


def _perturbed_seed(seed: int, i: int, sign: int) -> int:
    return int(np.random.SeedSequence([int(seed), i, 1 if sign > 0 else 2]).generate_state(1)[0])


def finite_difference_gradient(sim_cfg: SimConfig, theta: Sequence[float], delta: float = 0.01,
                               mode: str = "common") -> np.ndarray:
    """Central differences of the sample cost, one-sided at the bounds.

    ``mode="common"`` reuses ``sim_cfg.seed`` for every perturbed run;
    ``"independent"`` gives each perturbed run its own seed.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if mode not in ("common", "independent"):
        raise ValueError(f"mode must be 'common' or 'independent', got {mode!r}")
    theta = np.asarray(theta, dtype=np.float64)
    lo, hi = sim_cfg.theta.lower, sim_cfg.theta.upper
    base_cost = None
    grad = np.zeros(4)
    for i in range(4):
        up = theta[i] + delta <= hi
        down = theta[i] - delta >= lo
        if not (up or down):
            raise ValueError(f"theta{i + 1} cannot move by {delta} inside [{lo}, {hi}]")

        def cost(sign):
            th = theta.copy()
            th[i] += sign * delta
            cfg = sim_cfg.with_theta(th)
            if mode == "independent":
                cfg = cfg.with_seed(_perturbed_seed(sim_cfg.seed, i, sign))
            return simulate(cfg).L

        if up and down:
            grad[i] = (cost(+1) - cost(-1)) / (2 * delta)
            continue
        if base_cost is None:
            base_cost = simulate(sim_cfg.with_theta(theta)).L
        if up:
            grad[i] = (cost(+1) - base_cost) / delta
        else:
            grad[i] = (base_cost - cost(-1)) / delta
    return grad


@dataclass
class FdComparison:
    """IPA against central differences on one sample path."""

    L: float
    ipa: np.ndarray
    fd: np.ndarray
    reordered: np.ndarray      # per coordinate: did +-delta change the signature

    @property
    def any_reordered(self) -> bool:
        return bool(self.reordered.any())

    @property
    def rel_err(self) -> np.ndarray:
        diff = np.abs(self.ipa - self.fd)
        scale = np.maximum(np.abs(self.ipa), np.abs(self.fd))
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)
        return np.where(diff <= 1e-9, 0.0, rel)


def compare_ipa_fd(sim_cfg: SimConfig, delta: float = 0.01, rates=None) -> FdComparison:
    """Common-random-number central differences next to the IPA estimate.

    Each coordinate is moved by +-delta (one-sided at a bound).  A coordinate
    counts as reordered when either perturbed path has a different event
    signature from the nominal one.
    """
    from .ipa import run_ipa

    base = simulate(sim_cfg)
    sig = base.trace.signature()
    ipa = run_ipa(base.trace, sim_cfg.weights, rates).dL.copy()
    theta = sim_cfg.theta.as_array()
    lo, hi = sim_cfg.theta.lower, sim_cfg.theta.upper
    fd = np.zeros(4)
    moved = np.zeros(4, dtype=bool)
    for i in range(4):
        ends = []
        for sign in (+1, -1):
            th = theta.copy()
            th[i] += sign * delta
            if lo <= th[i] <= hi:
                res = simulate(sim_cfg.with_theta(th))
                moved[i] |= res.trace.signature() != sig
                ends.append((th[i], res.L))
            else:
                ends.append((theta[i], base.L))
        (tu, Lu), (tl, Ll) = ends
        fd[i] = (Lu - Ll) / (tu - tl)
    return FdComparison(base.L, ipa, fd, moved)


__all__ = ["GridSpec", "GridResult", "grid_costs", "grid_search", "finite_difference_gradient",
           "FdComparison", "compare_ipa_fd", "estimate_J", "write_table"]
