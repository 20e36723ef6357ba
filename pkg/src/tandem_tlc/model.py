"""Domain types and the pure dynamics of the two-intersection network.

Queues are numbered 1..4 as in the figures: queues 1 and 2 cross at the
first intersection, queues 3 and 4 at the second, and every vehicle leaving
queue 1 joins queue 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

QUEUES = (1, 2, 3, 4)
THETA_MIN = 15.0
THETA_MAX = 40.0


class EventKind(IntEnum):
    """Event types.  The integer value is the tie-break priority used when
    several events share a timestamp (lower value is processed first)."""

    ARR = 0
    DEP = 1
    E = 2
    RATE_CHANGE = 3
    G2R = 4
    R2G = 5
    S = 6

    @property
    def label(self) -> str:
        return self.name

    @classmethod
    def parse(cls, label: str) -> "EventKind":
        return cls[label.strip().upper()]


def perpendicular(n: int) -> int:
    """Index of the crossing queue at the same intersection."""
    return {1: 2, 2: 1, 3: 4, 4: 3}[n]


def intersection_of(n: int) -> int:
    """1 for queues 1 and 2, 2 for queues 3 and 4."""
    return 1 if n in (1, 2) else 2


def _check_queue(n: int) -> None:
    if n not in QUEUES:
        raise ValueError(f"queue index must be one of 1..4, got {n!r}")


@dataclass(frozen=True)
class ThetaVector:
    """Green-cycle lengths theta_1..theta_4 (seconds) with their box bounds."""

    theta: tuple
    lower: float = THETA_MIN
    upper: float = THETA_MAX

    def __post_init__(self):
        vals = tuple(float(v) for v in self.theta)
        if len(vals) != 4:
            raise ValueError(f"theta needs 4 entries, got {len(vals)}")
        if not self.lower < self.upper:
            raise ValueError(f"theta bounds out of order: lower={self.lower} >= upper={self.upper}")
        if self.lower <= 0:
            raise ValueError("theta lower bound must be strictly positive")
        for i, v in enumerate(vals, start=1):
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"theta{i}={v} must be finite and > 0")
            if v < self.lower - 1e-12 or v > self.upper + 1e-12:
                raise ValueError(f"theta{i}={v} outside [{self.lower}, {self.upper}]")
        object.__setattr__(self, "theta", vals)

    def __getitem__(self, n: int) -> float:
        """1-based access, ``theta[1]`` is theta_1."""
        _check_queue(n)
        return self.theta[n - 1]

    def as_array(self) -> np.ndarray:
        return np.array(self.theta, dtype=np.float64)

    def replace(self, values: Sequence[float]) -> "ThetaVector":
        return ThetaVector(tuple(values), self.lower, self.upper)


@dataclass(frozen=True)
class ClockState:
    """Per-queue green clocks z_1..z_4 plus the phase of each intersection.

    ``phase`` names the queue holding the green at intersections 1 and 2.  It
    only matters when both clocks of an intersection read zero, where the
    clock rule alone cannot tell which light is green (e.g. at t=0).
    """

    z: tuple
    phase: tuple = (1, 3)

    def __post_init__(self):
        z = tuple(float(v) for v in self.z)
        if len(z) != 4:
            raise ValueError("clock needs 4 entries")
        if any(v < 0 for v in z):
            raise ValueError(f"clock values must be >= 0, got {z}")
        if self.phase[0] not in (1, 2) or self.phase[1] not in (3, 4):
            raise ValueError(f"bad phase {self.phase}")
        object.__setattr__(self, "z", z)

    def __getitem__(self, n: int) -> float:
        _check_queue(n)
        return self.z[n - 1]


@dataclass(frozen=True)
class QueueState:
    """Queue contents and NEP bookkeeping."""

    x: tuple
    nep_index: tuple = (0, 0, 0, 0)
    nep_start: tuple = (None, None, None, None)

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        if len(x) != 4:
            raise ValueError("queue state needs 4 entries")
        object.__setattr__(self, "x", x)

    def __getitem__(self, n: int) -> float:
        _check_queue(n)
        return self.x[n - 1]


@dataclass(frozen=True)
class FlowRates:
    """Arrival, service and effective departure rates (veh/s), 1-based via
    ``rates.alpha_of(n)`` etc.; the tuples are 0-based."""

    alpha: tuple
    h: tuple
    beta: tuple

    def __post_init__(self):
        for name in ("alpha", "h", "beta"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 4:
                raise ValueError(f"{name} needs 4 entries")
            if any(v < 0 or not np.isfinite(v) for v in vals):
                raise ValueError(f"{name} must be finite and >= 0, got {vals}")
            object.__setattr__(self, name, vals)


@dataclass(frozen=True)
class EventRecord:
    """One trace entry.  Rates refer to ``queue`` just before (minus) and just
    after (plus) the event; ``x`` is the state after it."""

    time: float
    kind: EventKind
    queue: int
    alpha_minus: float = 0.0
    alpha_plus: float = 0.0
    beta_minus: float = 0.0
    beta_plus: float = 0.0
    h: float = 0.0
    x: tuple = (0.0, 0.0, 0.0, 0.0)
    green: tuple = field(default=(True, False, True, False))

    def __post_init__(self):
        _check_queue(self.queue)
        object.__setattr__(self, "kind", EventKind(self.kind))


def is_green(clock: ClockState, theta: ThetaVector, n: int) -> bool:
    """Light predicate B_n(z, theta)."""
    _check_queue(n)
    m = perpendicular(n)
    zn, zm = clock[n], clock[m]
    if 0.0 < zn < theta[n]:
        return True
    if zm == theta[m]:
        return True
    if zn == 0.0 and zm == 0.0:
        lead = clock.phase[0] if n in (1, 2) else clock.phase[1]
        return lead == n
    return False


def effective_departure(green: bool, x: float, alpha: float, h: float) -> float:
    """beta_n: h when green and non-empty, the inflow when green and empty,
    0 when red.  A green empty queue never passes more than h."""
    if not green:
        return 0.0
    if x > 0.0:
        return h
    return min(alpha, h)


def flow_rates(alpha_exo: Sequence[float], h: Sequence[float], x: Sequence[float],
               green: Sequence[bool]) -> FlowRates:
    """Assemble FlowRates from exogenous arrivals of queues 1, 2, 4.

    ``alpha_exo`` has four entries; entry 3 is ignored and replaced by the
    departure rate of queue 1.
    """
    a = [float(v) for v in alpha_exo]
    b = [0.0] * 4
    b[0] = effective_departure(green[0], x[0], a[0], h[0])
    a[2] = b[0]
    for i in (1, 2, 3):
        b[i] = effective_departure(green[i], x[i], a[i], h[i])
    return FlowRates(tuple(a), tuple(h), tuple(b))


def queue_drift(n: int, state: QueueState, clock: ClockState, theta: ThetaVector,
                rates: FlowRates) -> float:
    """Time derivative of x_n for the current mode."""
    _check_queue(n)
    if state[n] < 0:
        raise ValueError(f"x{n}={state[n]} is negative")
    i = n - 1
    if n != 3:
        alpha, beta = rates.alpha[i], rates.beta[i]
        if not is_green(clock, theta, n):
            return alpha
        if state[n] == 0.0 and alpha <= beta:
            return 0.0
        return alpha - beta

    if state[1] < 0:
        raise ValueError(f"x1={state[1]} is negative")
    b1 = is_green(clock, theta, 1)
    b3 = is_green(clock, theta, 3)
    h1, h3, a1 = rates.h[0], rates.h[2], rates.alpha[0]
    x1, x3 = state[1], state[3]
    if not b3:
        if not b1:
            return 0.0
        return h1 if x1 > 0 else a1
    if x3 == 0.0:
        return 0.0
    if b1:
        return (h1 if x1 > 0 else a1) - h3
    return -h3


def next_light_switch(clock: ClockState, theta: ThetaVector):
    """Time to the next light switch and the events it fires.

    Returns ``(dt, events)`` where ``events`` is a tuple of
    ``(EventKind, queue)`` pairs.  Each switching intersection contributes a
    G2R on the expiring queue and an R2G on its crossing queue; when both
    intersections switch together all four events are returned, G2Rs first.
    """
    best = np.inf
    switching = []
    for a, b in ((1, 2), (3, 4)):
        g = a if is_green(clock, theta, a) else b
        residual = theta[g] - clock[g]
        if residual < best - 1e-12:
            best = residual
            switching = [g]
        elif abs(residual - best) <= 1e-12:
            switching.append(g)
    g2r = tuple((EventKind.G2R, g) for g in switching)
    r2g = tuple((EventKind.R2G, perpendicular(g)) for g in switching)
    return float(best), g2r + r2g
