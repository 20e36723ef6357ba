"""Sample-path generation for the two tandem intersections.

Two backends share one trace format:

* ``discrete``: Poisson car arrivals on roads 1, 2, 4, deterministic
  headways ``1/H_n`` while green, departures of queue 1 feed queue 3.
* ``fluid``: piecewise-constant arrival rates with exponential holding
  times; queues are integrated exactly between events.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .kernels import discrete as _dk
from .kernels import fluid as _fk
from .kernels.common import switch_schedule
from .model import EventKind, EventRecord, ThetaVector

BACKENDS = ("discrete", "fluid")
TRACE_COLUMNS = ("time", "kind", "queue", "alpha_minus", "alpha_plus", "beta_minus",
                 "beta_plus", "h", "x1", "x2", "x3", "x4")
EXOGENOUS = (1, 2, 4)


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to generate one sample path."""

    theta: ThetaVector = field(default_factory=lambda: ThetaVector((15.0, 15.0, 15.0, 15.0)))
    horizon: float = 1000.0
    arrival_rates: tuple = (0.25, 0.25, 0.25)   # queues 1, 2, 4
    service_rates: tuple = (1.0, 1.0, 1.0, 1.0)
    weights: tuple = (1.0, 1.0, 1.0, 1.0)
    backend: str = "discrete"
    seed: int = 0
    hold_mean: Optional[float] = 50.0           # fluid: None means constant rates
    level_range: tuple = (0.0, 2.0)             # fluid: levels ~ U[lo, hi] * mean rate
    initial_green: tuple = (1, 3)
    x0: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not isinstance(self.theta, ThetaVector):
            object.__setattr__(self, "theta", ThetaVector(tuple(self.theta)))
        for name, size in (("arrival_rates", 3), ("service_rates", 4), ("weights", 4), ("x0", 4)):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != size:
                raise ValueError(f"{name} needs {size} entries, got {len(vals)}")
            if any(not math.isfinite(v) or v < 0 for v in vals):
                raise ValueError(f"{name} must be finite and >= 0, got {vals}")
            object.__setattr__(self, name, vals)
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if any(h <= 0 for h in self.service_rates):
            raise ValueError("service rates must be > 0")
        if self.hold_mean is not None and not self.hold_mean > 0:
            raise ValueError("hold_mean must be > 0 or None")
        lo, hi = (float(v) for v in self.level_range)
        if not 0 <= lo <= hi:
            raise ValueError(f"level_range must satisfy 0 <= lo <= hi, got {self.level_range}")
        object.__setattr__(self, "level_range", (lo, hi))
        g = tuple(int(v) for v in self.initial_green)
        if len(g) != 2 or g[0] not in (1, 2) or g[1] not in (3, 4):
            raise ValueError(f"initial_green must name one queue per intersection, got {g}")
        object.__setattr__(self, "initial_green", g)
        if self.backend == "discrete" and any(v != 0 for v in self.x0):
            raise ValueError("the discrete backend starts from empty queues")

    @property
    def alpha_bar(self) -> np.ndarray:
        """Mean exogenous rates as a 4-vector (entry 3 is 0)."""
        a1, a2, a4 = self.arrival_rates
        return np.array([a1, a2, 0.0, a4])

    def with_theta(self, theta) -> "SimConfig":
        if not isinstance(theta, ThetaVector):
            theta = self.theta.replace(theta)
        return replace(self, theta=theta)

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=int(seed))

    def green0(self) -> np.ndarray:
        g = np.zeros(4, dtype=np.bool_)
        g[self.initial_green[0] - 1] = True
        g[self.initial_green[1] - 1] = True
        return g


class Trace:
    """Materialized event trace over [0, horizon].

    Float columns of ``rf``: time, alpha-, alpha+, beta-, beta+, h.  Integer
    columns of ``ri``: kind, queue (1-based).  ``x`` and ``green`` hold the
    state right after each record.
    """

    def __init__(self, backend, horizon, rf, ri, x, green, x0, xT, green0, service_rates):
        self.backend = backend
        self.horizon = float(horizon)
        self.rf = rf
        self.ri = ri
        self.x = x
        self.green = green
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.xT = np.asarray(xT, dtype=np.float64)
        self.green0 = np.asarray(green0, dtype=np.bool_)
        self.service_rates = np.asarray(service_rates, dtype=np.float64)

    def __len__(self):
        return self.rf.shape[0]

    def __getitem__(self, k) -> EventRecord:
        f = self.rf[k]
        return EventRecord(time=float(f[0]), kind=EventKind(int(self.ri[k, 0])),
                           queue=int(self.ri[k, 1]), alpha_minus=float(f[1]),
                           alpha_plus=float(f[2]), beta_minus=float(f[3]),
                           beta_plus=float(f[4]), h=float(f[5]),
                           x=tuple(float(v) for v in self.x[k]),
                           green=tuple(bool(v) for v in self.green[k]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    @property
    def time(self):
        return self.rf[:, 0]

    @property
    def kind(self):
        return self.ri[:, 0]

    @property
    def queue(self):
        return self.ri[:, 1]

    def select(self, kind: EventKind, queue: Optional[int] = None) -> np.ndarray:
        """Times of records of one kind (optionally one queue)."""
        mask = self.ri[:, 0] == int(kind)
        if queue is not None:
            mask &= self.ri[:, 1] == queue
        return self.rf[mask, 0]

    def signature(self) -> tuple:
        """Mode-sequence fingerprint of the path.

        For each queue, the kinds of its records in order.  Queue 3 also
        lists the queue-1 records that fall in its empty periods, since only
        then does the relative order of the two decide when it starts to
        fill.  Orderings left out (e.g. a switch at intersection 1 passing one
        at intersection 2 while queue 3 holds cars) do not change the mode
        any queue is in, so paths with equal signatures differ only in event
        times.
        """
        seqs = ([], [], [], [])
        q3_busy = bool(self.x0[2] > 0)
        for kind, q in self.ri.tolist():
            seqs[q - 1].append(kind)
            if q == 3:
                if kind == EventKind.S:
                    q3_busy = True
                elif kind == EventKind.E:
                    q3_busy = False
            elif q == 1 and not q3_busy:
                seqs[2].append(-1 - kind)
        return tuple(tuple(v) for v in seqs)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for k in range(len(self)):
                f = self.rf[k]
                row = [f"{f[0]:.9f}", EventKind(int(self.ri[k, 0])).label, int(self.ri[k, 1])]
                row += [f"{v:.9f}" for v in f[1:6]]
                row += [f"{v:.9f}" for v in self.x[k]]
                w.writerow(row)


@dataclass
class SamplePathResult:
    L: float
    areas: np.ndarray          # integral of x_n over [0, T], per queue
    trace: Trace
    neps: dict                 # queue -> list of (start, end); end = T if still open
    arrivals: np.ndarray       # per queue: cars (discrete) or volume (fluid)
    departures: np.ndarray
    config: SimConfig

    @property
    def x_final(self) -> np.ndarray:
        return self.trace.xT


def _queue_rng(seed, n: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, n])


def arrival_process(backend: str, rate: float, seed, horizon: float,
                    hold_mean: Optional[float] = 50.0, level_range=(0.0, 2.0)):
    """Exogenous input of one road.

    discrete: sorted Poisson arrival times on [0, horizon).
    fluid: ``(change_times, levels)`` of a piecewise-constant rate; the first
    change time is 0.

    ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    if rate < 0:
        raise ValueError(f"arrival rate must be >= 0, got {rate}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if backend == "discrete":
        if rate == 0:
            return np.empty(0)
        count = rng.poisson(rate * horizon)
        return np.sort(rng.uniform(0.0, horizon, count))
    if backend != "fluid":
        raise ValueError(f"unknown backend {backend!r}")
    if rate == 0 or hold_mean is None or not math.isfinite(hold_mean):
        return np.zeros(1), np.array([float(rate)])
    times = [0.0]
    t = 0.0
    while True:
        gaps = rng.exponential(hold_mean, size=max(16, int(2 * horizon / hold_mean)))
        for g in gaps:
            t += g
            if t >= horizon:
                break
            times.append(t)
        if t >= horizon:
            break
    lo, hi = level_range
    levels = rng.uniform(lo * rate, hi * rate, size=len(times))
    return np.array(times), levels


def _schedules(cfg: SimConfig):
    th = cfg.theta.as_array()
    out = []
    for inter, lead in enumerate(cfg.initial_green):
        g = lead - 1
        other = g + 1 if g % 2 == 0 else g - 1
        out.append((g, other, switch_schedule(th[g], th[other], cfg.horizon)))
    return out


def _green_windows(cfg: SimConfig):
    """(starts, ends) of green windows for each queue, 0-based list."""
    windows = [None] * 4
    for g, other, sw in _schedules(cfg):
        windows[g] = _dk.green_intervals(sw, True)
        windows[other] = _dk.green_intervals(sw, False)
    return windows


def discrete_arrivals(cfg: SimConfig) -> dict:
    """Poisson arrival times of roads 1, 2, 4 for ``cfg.seed``; theta-free."""
    out = {}
    for n, rate in zip(EXOGENOUS, cfg.arrival_rates):
        out[n] = arrival_process("discrete", rate, _queue_rng(cfg.seed, n), cfg.horizon)
    return out


def fluid_rates(cfg: SimConfig) -> dict:
    out = {}
    for n, rate in zip(EXOGENOUS, cfg.arrival_rates):
        out[n] = arrival_process("fluid", rate, _queue_rng(cfg.seed, 100 + n), cfg.horizon,
                                 cfg.hold_mean, cfg.level_range)
    return out


def _simulate_discrete(cfg: SimConfig) -> SamplePathResult:
    T = cfg.horizon
    arr = discrete_arrivals(cfg)
    win = _green_windows(cfg)
    d = 1.0 / np.array(cfg.service_rates)

    dep = {}
    dep[1] = _dk.serve(arr[1], win[0][0], win[0][1], d[0])
    dep[2] = _dk.serve(arr[2], win[1][0], win[1][1], d[1])
    arr[3] = dep[1][dep[1] < T].copy()
    dep[3] = _dk.serve(arr[3], win[2][0], win[2][1], d[2])
    dep[4] = _dk.serve(arr[4], win[3][0], win[3][1], d[3])
    areas = np.array([_dk.area(arr[n], dep[n], T) for n in (1, 2, 3, 4)])

    times, kinds, queues = [], [], []
    for n in (1, 2, 3, 4):
        a = arr[n][arr[n] < T]
        times.append(a)
        kinds.append(np.full(a.size, int(EventKind.ARR)))
        queues.append(np.full(a.size, n))
        dn = dep[n][dep[n] < T]
        times.append(dn)
        kinds.append(np.full(dn.size, int(EventKind.DEP)))
        queues.append(np.full(dn.size, n))
    for g, other, sw in _schedules(cfg):
        s = sw[sw < T]
        k = np.arange(s.size)
        red = np.where(k % 2 == 0, g, other) + 1
        grn = np.where(k % 2 == 0, other, g) + 1
        times += [s, s]
        kinds += [np.full(s.size, int(EventKind.G2R)), np.full(s.size, int(EventKind.R2G))]
        queues += [red, grn]
    bt = np.concatenate(times)
    bk = np.concatenate(kinds).astype(np.int64)
    bq = np.concatenate(queues).astype(np.int64)
    order = np.lexsort((bq, bk, bt))
    bt, bk, bq = bt[order], bk[order], bq[order]

    cap = int(bt.size * 1.6) + 64
    while True:
        status, n_rec, rf, ri, rx, rg, xT = _dk.assemble_records(
            bt, bk, bq, cfg.alpha_bar, np.array(cfg.service_rates), cfg.green0(), cap)
        if status == 0:
            break
        cap *= 2
    trace = Trace("discrete", T, rf[:n_rec], ri[:n_rec], rx[:n_rec], rg[:n_rec],
                  np.zeros(4), xT, cfg.green0(), cfg.service_rates)
    w = np.array(cfg.weights)
    L = float(np.dot(w, areas) / T)
    arrivals = np.array([arr[n].size for n in (1, 2, 3, 4)], dtype=np.float64)
    departures = np.array([np.count_nonzero(dep[n] < T) for n in (1, 2, 3, 4)], dtype=np.float64)
    return SamplePathResult(L, areas, trace, nep_periods(trace), arrivals, departures, cfg)


def _simulate_fluid(cfg: SimConfig) -> SamplePathResult:
    T = cfg.horizon
    rates = fluid_rates(cfg)
    M = max(r[0].size for r in rates.values())
    rate_t = np.zeros((4, M))
    rate_v = np.zeros((4, M))
    rate_n = np.zeros(4, dtype=np.int64)
    for n, (tt, vv) in rates.items():
        rate_t[n - 1, : tt.size] = tt
        rate_v[n - 1, : vv.size] = vv
        rate_n[n - 1] = tt.size

    scheds = _schedules(cfg)
    K = max(s[2].size for s in scheds) + 1
    sw = np.full((2, K), np.inf)
    for i, (_, _, s) in enumerate(scheds):
        sw[i, : s.size] = s

    H = np.array(cfg.service_rates)
    x0 = np.array(cfg.x0)
    cap = 256 + 8 * int(T / min(cfg.theta.theta)) + 4 * int(rate_n.sum())
    while True:
        status, n_rec, rf, ri, rx, rg, xT, cum_in, cum_out = _fk.simulate_fluid(
            H, x0, cfg.green0(), sw, rate_t, rate_v, rate_n, T, cap)
        if status == 0:
            break
        cap *= 2
    trace = Trace("fluid", T, rf[:n_rec].copy(), ri[:n_rec].copy(), rx[:n_rec].copy(),
                  rg[:n_rec].copy(), x0, xT.copy(), cfg.green0(), H)
    areas = queue_areas(trace)
    L = float(np.dot(np.array(cfg.weights), areas) / T)
    return SamplePathResult(L, areas, trace, nep_periods(trace), cum_in, cum_out, cfg)


def simulate(cfg: SimConfig) -> SamplePathResult:
    """One sample path; deterministic in ``cfg`` (seed included)."""
    if not isinstance(cfg, SimConfig):
        raise TypeError("simulate expects a SimConfig")
    if cfg.backend == "discrete":
        return _simulate_discrete(cfg)
    return _simulate_fluid(cfg)


def nep_periods(trace: Trace) -> dict:
    """Non-empty periods per queue from the S/E records."""
    out = {n: [] for n in (1, 2, 3, 4)}
    open_at = {n: (0.0 if trace.x0[n - 1] > 0 else None) for n in (1, 2, 3, 4)}
    for t, kind, q in zip(trace.rf[:, 0], trace.ri[:, 0], trace.ri[:, 1]):
        if kind == EventKind.S:
            open_at[int(q)] = float(t)
        elif kind == EventKind.E:
            out[int(q)].append((open_at[int(q)], float(t)))
            open_at[int(q)] = None
    for n, start in open_at.items():
        if start is not None:
            out[n].append((start, trace.horizon))
    return out


def queue_areas(trace: Trace) -> np.ndarray:
    """Exact integral of each x_n over [0, T] from the trace alone.

    Fluid contents are linear between records (trapezoid rule is exact);
    discrete contents are constant between records.
    """
    T = trace.horizon
    t = np.concatenate(([0.0], trace.rf[:, 0], [T]))
    if np.any(np.diff(t) < 0):
        raise ValueError("trace is not ordered in time or extends past the horizon")
    dt = np.diff(t)
    if trace.backend == "fluid":
        xs = np.vstack((trace.x0, trace.x, trace.xT))
        return 0.5 * ((xs[:-1] + xs[1:]) * dt[:, None]).sum(axis=0)
    xs = np.vstack((trace.x0, trace.x))
    return (xs * dt[:, None]).sum(axis=0)


def sample_cost(trace: Trace, weights: Sequence[float], horizon: Optional[float] = None) -> float:
    """Weighted time-average queue length L over [0, T]."""
    if horizon is not None and not math.isclose(horizon, trace.horizon, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"trace covers [0, {trace.horizon}], not [0, {horizon}]")
    if trace.xT is None or len(trace.xT) != 4:
        raise ValueError("trace has no final state; it is incomplete")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (4,) or np.any(w < 0):
        raise ValueError("weights must be 4 non-negative numbers")
    return float(np.dot(w, queue_areas(trace)) / trace.horizon)


def seed_bank(master: int, count: int) -> np.ndarray:
    """Fixed list of seeds shared by paired comparisons."""
    return np.random.SeedSequence(int(master)).generate_state(count, dtype=np.uint32).astype(np.int64)
