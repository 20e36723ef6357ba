"""Cycle-length optimization for two tandem signalized intersections."""

from .model import EventKind, EventRecord, ThetaVector
from .sim import SamplePathResult, SimConfig, Trace, sample_cost, simulate

__version__ = "0.1.0"

__all__ = [
    "EventKind",
    "EventRecord",
    "SamplePathResult",
    "SimConfig",
    "ThetaVector",
    "Trace",
    "sample_cost",
    "simulate",
]
