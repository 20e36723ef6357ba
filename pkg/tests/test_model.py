import numpy as np
import pytest

from tandem_tlc.model import (ClockState, EventKind, EventRecord, FlowRates, QueueState,
                              ThetaVector, effective_departure, flow_rates, intersection_of,
                              is_green, next_light_switch, perpendicular, queue_drift)

THETA = ThetaVector((15.0, 15.0, 15.0, 15.0))


def test_green_inside_own_window():
    assert is_green(ClockState((5, 0, 0, 0)), THETA, 1)


def test_green_when_crossing_clock_expired():
    assert is_green(ClockState((15, 0, 0, 0)), THETA, 2)


def test_red_while_crossing_queue_runs():
    assert not is_green(ClockState((15, 3, 0, 0)), THETA, 1)


def test_initial_phase_greens_queues_1_and_3():
    clock = ClockState((0, 0, 0, 0))
    assert [is_green(clock, THETA, n) for n in (1, 2, 3, 4)] == [True, False, True, False]
    flipped = ClockState((0, 0, 0, 0), phase=(2, 4))
    assert [is_green(flipped, THETA, n) for n in (1, 2, 3, 4)] == [False, True, False, True]


@pytest.mark.parametrize("z", [(0, 0, 0, 0), (5, 0, 2, 0), (15, 0, 0, 7), (0, 3, 15, 0),
                               (14.9, 0, 0, 14.9)])
def test_exactly_one_green_per_intersection(z):
    clock = ClockState(z)
    assert is_green(clock, THETA, 1) != is_green(clock, THETA, 2)
    assert is_green(clock, THETA, 3) != is_green(clock, THETA, 4)


def test_drift_red_queue_fills_at_arrival_rate():
    clock = ClockState((5, 0, 5, 0))          # queue 2 red
    rates = flow_rates((0, 0.25, 0, 0), (1, 1, 1, 1), (0, 0, 0, 0), (True, False, True, False))
    assert queue_drift(2, QueueState((0, 0, 0, 0)), clock, THETA, rates) == 0.25


def test_drift_queue3_both_green_and_busy():
    clock = ClockState((5, 0, 5, 0))
    x = (2, 0, 3, 0)
    rates = flow_rates((0.25, 0, 0, 0), (1, 1, 1, 1), x, (True, False, True, False))
    assert queue_drift(3, QueueState(x), clock, THETA, rates) == 0.0


def test_drift_queue3_green_with_upstream_red():
    clock = ClockState((0, 5, 5, 0))          # queue 1 red, queue 3 green
    x = (0, 0, 3, 0)
    rates = flow_rates((0.25, 0, 0, 0), (1, 1, 1, 1), x, (False, True, True, False))
    assert queue_drift(3, QueueState(x), clock, THETA, rates) == -1.0


def test_empty_green_queue_never_drains_below_zero():
    clock = ClockState((5, 0, 5, 0))
    rates = flow_rates((0.25, 0, 0, 0.25), (1, 1, 1, 1), (0, 0, 0, 0), (True, False, True, False))
    for n in (1, 3):
        assert queue_drift(n, QueueState((0, 0, 0, 0)), clock, THETA, rates) == 0.0


def test_effective_departure_branches():
    assert effective_departure(False, 3.0, 0.25, 1.0) == 0.0
    assert effective_departure(True, 3.0, 0.25, 1.0) == 1.0
    assert effective_departure(True, 0.0, 0.25, 1.0) == 0.25
    assert effective_departure(True, 0.0, 2.0, 1.0) == 1.0


def test_queue3_inflow_is_queue1_outflow():
    r = flow_rates((0.3, 0.2, 99.0, 0.1), (1, 1, 1, 1), (1, 0, 0, 0), (True, False, True, False))
    assert r.alpha[2] == r.beta[0] == 1.0


def test_residual_green():
    dt, events = next_light_switch(ClockState((10, 0, 0, 0)), THETA)
    assert dt == 5.0
    assert (EventKind.G2R, 1) in events and (EventKind.R2G, 2) in events


def test_full_crossing_cycle():
    theta = ThetaVector((15, 20, 40, 40))
    dt, events = next_light_switch(ClockState((0, 0, 1, 0), phase=(2, 3)), theta)
    assert dt == 20.0
    assert events[:1] == ((EventKind.G2R, 2),) and (EventKind.R2G, 1) in events


def test_earliest_intersection_switches_first():
    dt, events = next_light_switch(ClockState((14, 0, 14.5, 0)), THETA)
    assert dt == pytest.approx(0.5)
    assert events == ((EventKind.G2R, 3), (EventKind.R2G, 4))


def test_simultaneous_switches_list_g2r_first():
    dt, events = next_light_switch(ClockState((10, 0, 10, 0)), THETA)
    assert dt == 5.0
    assert [k for k, _ in events] == [EventKind.G2R, EventKind.G2R, EventKind.R2G, EventKind.R2G]


def test_switch_times_affine_in_theta():
    from tandem_tlc.kernels.common import switch_schedule

    for a, b in ((17.0, 23.0), (19.5, 21.25)):
        times = switch_schedule(a, b, 10 * (a + b))
        g2r, r2g = times[0::2], times[1::2]
        for k in range(10):
            assert g2r[k] == pytest.approx((k + 1) * a + k * b, abs=1e-9)
            assert r2g[k] == pytest.approx((k + 1) * (a + b), abs=1e-9)


def test_theta_bounds_checked():
    with pytest.raises(ValueError, match="theta2"):
        ThetaVector((15, 14, 15, 15))
    with pytest.raises(ValueError, match="out of order"):
        ThetaVector((20, 20, 20, 20), lower=30, upper=20)
    assert ThetaVector((5, 5, 5, 5), lower=1, upper=10)[4] == 5


def test_rates_reject_negative():
    with pytest.raises(ValueError):
        FlowRates((0, 0, 0, -1), (1, 1, 1, 1), (0, 0, 0, 0))


def test_indices_are_one_based():
    assert perpendicular(1) == 2 and perpendicular(4) == 3
    assert intersection_of(2) == 1 and intersection_of(3) == 2
    with pytest.raises(ValueError):
        EventRecord(0.0, EventKind.S, 0)
    assert EventKind.parse("G2R") is EventKind.G2R
    assert [k.label for k in EventKind][:2] == ["ARR", "DEP"]


def test_tie_break_order():
    order = sorted([EventKind.S, EventKind.R2G, EventKind.G2R, EventKind.E])
    assert order == [EventKind.E, EventKind.G2R, EventKind.R2G, EventKind.S]
    assert np.all(np.diff([EventKind.E, EventKind.G2R, EventKind.R2G, EventKind.S]) > 0)
