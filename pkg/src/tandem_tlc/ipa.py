"""Gradient of the sample cost with respect to the four green lengths.

The estimator replays an event trace, tracking ``xprime[n, i] = dx_n/dtheta_i``
(constant between events) and integrating it over non-empty periods.  Light
switches happen at times affine in theta, so their time derivatives are the
running switch counts; the end of a non-empty period has time derivative
``-xprime_n / drift``.

On the discrete backend the rates used at each event are estimated from the
trace by counting arrivals or departures in a window around the event.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .kernels import ipa as _k
from .model import EventKind, EventRecord, flow_rates, intersection_of
from .sim import Trace

DIRECTIONS = ("before", "after", "symmetric")
GRADIENT_COLUMNS = ("theta1", "theta2", "theta3", "theta4", "L", "dL1", "dL2", "dL3", "dL4",
                    "n_events", "n_degenerate")


@dataclass(frozen=True)
class RateEstimatorConfig:
    """How rates are read off a discrete trace.

    ``window`` is the counting window in seconds.  With ``known_service`` the
    configured service rates are used and departure rates follow from the
    queue state; otherwise departure rates are counted too.
    """

    window: float = 30.0
    direction: str = "symmetric"
    known_service: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.window) and self.window > 0):
            raise ValueError(f"window must be > 0, got {self.window}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")


class IpaState:
    """Derivative state carried along a trace (queues are 1-based in methods)."""

    def __init__(self, weights: Sequence[float], horizon: float,
                 service_rates: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
                 green0: Sequence[bool] = (True, False, True, False),
                 nonempty0: Sequence[bool] = (False, False, False, False)):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.horizon = float(horizon)
        self.xprime = np.zeros((4, 4))
        self.counters = np.zeros((2, 2))   # per intersection: (G2R, R2G) of its lead queue
        self.nep = np.array(nonempty0, dtype=np.bool_)
        self.green = np.array(green0, dtype=np.bool_)
        self.h = np.array(service_rates, dtype=np.float64)
        self.dL = np.zeros(4)
        self.t_last = 0.0
        self.n_events = 0
        self.n_degenerate = 0
        self.opened = np.full(4, -1.0)     # when each current NEP began

    @property
    def zeta(self) -> dict:
        """G2R counts of queues 1 and 3."""
        return {1: int(self.counters[0, 0]), 3: int(self.counters[1, 0])}

    @property
    def rho(self) -> dict:
        """R2G counts of queues 1 and 3."""
        return {1: int(self.counters[0, 1]), 3: int(self.counters[1, 1])}

    def row(self, n: int) -> np.ndarray:
        return self.xprime[n - 1]


def event_time_derivative(event: EventRecord, ipa: IpaState) -> np.ndarray:
    """d(event time)/d(theta), given counters that already include ``event``."""
    kind = EventKind(event.kind)
    tau = np.zeros(4)
    if kind in (EventKind.G2R, EventKind.R2G):
        inter = intersection_of(event.queue) - 1
        tau[2 * inter] = ipa.counters[inter, 0]
        tau[2 * inter + 1] = ipa.counters[inter, 1]
    elif kind == EventKind.E:
        drift = event.alpha_minus - event.beta_minus
        if drift < 0:
            tau = -ipa.xprime[event.queue - 1] / drift
    return tau


def apply_event(ipa: IpaState, event: EventRecord) -> IpaState:
    """Apply the derivative jump of one event (in place; returns ``ipa``)."""
    kind = EventKind(event.kind)
    if event.time < ipa.t_last:
        raise ValueError(f"event at {event.time} precedes the last one at {ipa.t_last}")
    n = event.queue - 1
    tau = np.zeros(4)
    x_after = event.x[n] if event.x is not None else 1.0
    fresh = bool(ipa.nep[n] and ipa.opened[n] == event.time)
    was = ipa.nep.copy()
    ipa.n_degenerate += _k.apply_event(
        ipa.xprime, ipa.counters, ipa.nep, ipa.green, ipa.h, tau, int(kind), n,
        event.alpha_minus, event.alpha_plus, event.beta_minus, event.beta_plus, event.h, x_after,
        fresh)
    ipa.opened[ipa.nep & ~was] = event.time
    ipa.n_events += 1
    ipa.t_last = event.time
    return ipa


def accumulate(ipa: IpaState, start: float, end: float) -> IpaState:
    """Add the cost-derivative contribution of [start, end) with no events inside."""
    if end < start:
        raise ValueError(f"negative interval [{start}, {end})")
    _k.accumulate(ipa.xprime, ipa.nep, ipa.dL, ipa.weights, end - start, ipa.horizon)
    return ipa


def _window(t, direction, width, horizon):
    if direction == "before":
        lo, hi = t - width, t
    elif direction == "after":
        lo, hi = t, t + width
    else:
        lo, hi = t - width / 2, t + width / 2
    return np.maximum(lo, 0.0), np.minimum(hi, horizon)


def _counts(stamps, lo, hi):
    """Counts in (lo, hi] and the window lengths; empty windows give rate 0."""
    n = np.searchsorted(stamps, hi, side="right") - np.searchsorted(stamps, lo, side="right")
    span = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(span > 0, n / np.where(span > 0, span, 1.0), 0.0)
    return rate


def _instant_rates(trace: Trace, t: float):
    """Exact (alpha, beta) at time t of a fluid trace, right after any record at t."""
    k = int(np.searchsorted(trace.rf[:, 0], t, side="right")) - 1
    if k < 0:
        x, green = trace.x0, trace.green0
    else:
        x, green = trace.x[k], trace.green[k]
    a_exo = np.zeros(4)
    for n in (1, 2, 4):
        idx = np.flatnonzero(trace.ri[: k + 1, 1] == n) if k >= 0 else np.empty(0, int)
        if idx.size:
            a_exo[n - 1] = trace.rf[idx[-1], 2]
        else:
            later = np.flatnonzero(trace.ri[:, 1] == n)
            a_exo[n - 1] = trace.rf[later[0], 1] if later.size else 0.0
    rates = flow_rates(a_exo, trace.service_rates, x, green)
    return rates.alpha, rates.beta


def estimate_rate(trace: Trace, t: float, which: str, queue: int,
                  cfg: Optional[RateEstimatorConfig] = None) -> float:
    """Arrival (``which="alpha"``) or departure (``"beta"``) rate of a queue at t.

    Discrete traces: events counted in a window anchored at t, truncated to
    [0, T] with the divisor shortened to match.  Fluid traces: the exact
    instantaneous rate.
    """
    cfg = cfg or RateEstimatorConfig()
    if which not in ("alpha", "beta"):
        raise ValueError(f"which must be 'alpha' or 'beta', got {which!r}")
    if trace.backend == "fluid":
        alpha, beta = _instant_rates(trace, t)
        return float((alpha if which == "alpha" else beta)[queue - 1])
    kind = EventKind.ARR if which == "alpha" else EventKind.DEP
    stamps = trace.select(kind, queue)
    lo, hi = _window(np.array([t]), cfg.direction, cfg.window, trace.horizon)
    return float(_counts(stamps, lo, hi)[0])


def arrival_rate_table(trace: Trace, cfg: RateEstimatorConfig) -> np.ndarray:
    """Windowed arrival-rate estimate of every queue at every record time."""
    t = trace.rf[:, 0]
    lo, hi = _window(t, cfg.direction, cfg.window, trace.horizon)
    out = np.zeros((len(trace), 4))
    for n in (1, 2, 3, 4):
        out[:, n - 1] = _counts(trace.select(EventKind.ARR, n), lo, hi)
    return out


def exact_rate_table(trace: Trace) -> np.ndarray:
    """Exogenous arrival rates of a fluid trace in effect at each record.

    Row k holds the rates after records 0..k, so an E record sees the rate
    from before a rate change sharing its timestamp and an S record the one
    after it.  Column 3 is unused.
    """
    n_rec = len(trace)
    out = np.zeros((n_rec, 4))
    for n in (1, 2, 4):
        idx = np.flatnonzero(trace.ri[:, 1] == n)
        if idx.size == 0:
            continue
        last = np.full(n_rec, -1)
        last[idx] = idx
        last = np.maximum.accumulate(last)
        col = np.where(last >= 0, trace.rf[np.maximum(last, 0), 2], trace.rf[idx[0], 1])
        out[:, n - 1] = col
    return out


def counted_rates(trace: Trace, cfg: RateEstimatorConfig) -> np.ndarray:
    """Rate columns with every rate of a discrete trace counted from windows.

    Used when service rates are treated as unknown: departure rates before
    and after each event come from departures in the preceding and following
    windows, and the larger of the two stands in for the service rate.
    """
    rf = trace.rf.copy()
    T = trace.horizon
    t = rf[:, 0]
    q = trace.ri[:, 1]
    ahat = arrival_rate_table(trace, cfg)
    rows = np.arange(len(trace))
    rf[:, 1] = rf[:, 2] = ahat[rows, q - 1]
    for n in (1, 2, 3, 4):
        mine = q == n
        dep = trace.select(EventKind.DEP, n)
        rf[mine, 3] = _counts(dep, *_window(t[mine], "before", cfg.window, T))
        rf[mine, 4] = _counts(dep, *_window(t[mine], "after", cfg.window, T))
    rf[:, 5] = np.maximum(rf[:, 3], rf[:, 4])
    return rf


def _tie_orders(trace: Trace):
    """Record orders putting one intersection's coinciding switches last.

    Returns ``(order_1_late, order_2_late)``; the second is None when no two
    switches of different intersections share a timestamp.
    """
    n = len(trace)
    kinds, queues, t = trace.ri[:, 0], trace.ri[:, 1], trace.rf[:, 0]
    light = (kinds == EventKind.G2R) | (kinds == EventKind.R2G)
    inter = np.where(queues <= 2, 0, 1)
    lt, li = t[light], inter[light]
    shared = np.intersect1d(lt[li == 0], lt[li == 1])
    identity = np.arange(n)
    if shared.size == 0:
        return identity, None
    # within a timestamp: other records keep their place around the block of
    # light records, S records stay after it
    block = np.where(light, 1, np.where(kinds == EventKind.S, 2, 0))
    orders = []
    for late in (0, 1):
        rank = np.where(light & (inter == late), 1, 0)
        orders.append(np.lexsort((identity, rank, block, t)))
    return orders[0], orders[1]


def run_ipa(trace: Trace, weights: Sequence[float],
            cfg: Optional[RateEstimatorConfig] = None) -> IpaState:
    """Replay a whole trace through the compiled estimator.

    Fluid traces use their exact rates.  On discrete traces with known
    service rates, only the arrival rates of roads 1, 2, 4 are estimated; every
    departure rate (and hence queue 3's inflow) follows from whether the
    estimator considers the queue non-empty.
    """
    cfg = cfg or RateEstimatorConfig()
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (4,) or np.any(w < 0):
        raise ValueError("weights must be 4 non-negative numbers")
    rf = trace.rf
    ahat = np.zeros((0, 4))
    derive = False
    if trace.backend == "fluid":
        ahat = exact_rate_table(trace)
        derive = True
    elif trace.backend == "discrete":
        if cfg.known_service:
            ahat = arrival_rate_table(trace, cfg)
            derive = True
        else:
            rf = counted_rates(trace, cfg)
    def replay(order):
        a = ahat if ahat.shape[0] == 0 else ahat[order]
        out = _k.run_trace(rf[order], trace.ri[order], trace.x[order], len(trace), w,
                           trace.service_rates, trace.green0, trace.x0 > 0, trace.horizon,
                           a, derive)
        if out[0] != 0:
            raise ValueError("trace records are not in time order")
        return out

    # theta1/theta2 only move intersection 1, so for their derivatives its
    # switches count as slightly later than any coinciding intersection-2
    # switch; the reverse for theta3/theta4.  Without such ties both orders
    # are the identity.
    late1, late2 = _tie_orders(trace)
    _, dL, xp, cnt, n_deg = replay(late1)
    if late2 is not None:
        dL = dL.copy()
        dL[2:] = replay(late2)[1][2:]
    ipa = IpaState(w, trace.horizon, trace.service_rates, trace.green0, trace.x0 > 0)
    ipa.dL = dL
    ipa.xprime = xp
    ipa.counters = cnt
    ipa.n_events = len(trace)
    ipa.n_degenerate = int(n_deg)
    ipa.t_last = trace.horizon
    return ipa


def estimate_gradient(trace: Trace, weights: Sequence[float], horizon: Optional[float] = None,
                      cfg: Optional[RateEstimatorConfig] = None) -> np.ndarray:
    """dL/dtheta for one sample path."""
    if horizon is not None and not math.isclose(horizon, trace.horizon, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"trace covers [0, {trace.horizon}], not [0, {horizon}]")
    return run_ipa(trace, weights, cfg).dL.copy()


def write_gradient_csv(path, rows: Iterable[tuple]) -> None:
    """Rows of ``(theta, L, dL, n_events, n_degenerate)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRADIENT_COLUMNS)
        for theta, L, dL, n_events, n_deg in rows:
            w.writerow([f"{v:.9f}" for v in theta] + [f"{L:.9f}"]
                       + [f"{v:.9f}" for v in dL] + [int(n_events), int(n_deg)])
