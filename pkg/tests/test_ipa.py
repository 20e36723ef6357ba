import numpy as np
import pytest

from tandem_tlc.ipa import (IpaState, RateEstimatorConfig, accumulate, apply_event,
                            estimate_gradient, estimate_rate, event_time_derivative, run_ipa,
                            write_gradient_csv)
from tandem_tlc.model import EventKind, EventRecord
from tandem_tlc.sim import SimConfig, Trace, simulate

W = (1.0, 1.0, 1.0, 1.0)


def queue2_scenario(**kw):
    base = dict(theta=(15, 20, 15, 15), arrival_rates=(0.0, 0.25, 0.0), weights=(0, 1, 0, 0),
                horizon=35.0, backend="fluid", hold_mean=None)
    base.update(kw)
    return SimConfig(**base)


def rec(kind, queue, t=1.0, am=0.0, ap=0.0, bm=0.0, bp=0.0, h=1.0, x=(1.0, 1.0, 1.0, 1.0)):
    return EventRecord(t, kind, queue, am, ap, bm, bp, h, x)


def test_first_g2r1_time_derivative():
    ipa = IpaState(W, 100.0)
    apply_event(ipa, rec(EventKind.G2R, 1, t=15.0))
    assert np.array_equal(event_time_derivative(rec(EventKind.G2R, 1), ipa), [1, 0, 0, 0])


def test_rate_change_is_exogenous():
    ipa = IpaState(W, 100.0)
    assert np.array_equal(event_time_derivative(rec(EventKind.RATE_CHANGE, 2), ipa), [0, 0, 0, 0])


def test_second_r2g3_time_derivative():
    ipa = IpaState(W, 200.0)
    for t, kind, q in ((15, EventKind.G2R, 3), (15, EventKind.R2G, 4), (30, EventKind.G2R, 4),
                       (30, EventKind.R2G, 3), (45, EventKind.G2R, 3), (45, EventKind.R2G, 4),
                       (60, EventKind.G2R, 4), (60, EventKind.R2G, 3)):
        apply_event(ipa, rec(kind, q, t=t, x=(0, 0, 0, 0)))
    assert ipa.zeta[3] == 2 and ipa.rho[3] == 2
    assert np.array_equal(event_time_derivative(rec(EventKind.R2G, 3), ipa), [0, 0, 2, 2])


def test_e3_resets_row():
    ipa = IpaState(W, 100.0)
    ipa.nep[2] = True
    ipa.xprime[2] = [0.4, 0.2, -1.0, -0.5]
    apply_event(ipa, rec(EventKind.E, 3, am=0.0, bm=1.0, x=(0, 0, 0, 0)))
    assert np.array_equal(ipa.row(3), [0, 0, 0, 0])
    assert not ipa.nep[2]


def test_e1_hands_row_to_queue3():
    ipa = IpaState(W, 100.0)
    ipa.nep[0] = ipa.nep[2] = True
    ipa.xprime[0] = [-1, 0, 0, 0]
    ipa.xprime[2] = [2, 1, 0, 0]
    apply_event(ipa, rec(EventKind.E, 1, am=0.25, bm=1.0, x=(0, 0, 1, 0)))
    assert np.array_equal(ipa.row(3), [1, 1, 0, 0])
    assert np.array_equal(ipa.row(1), [0, 0, 0, 0])


def test_g2r1_cuts_queue3_inflow():
    ipa = IpaState(W, 100.0)
    ipa.counters[0] = [1, 1]            # becomes zeta=2, rho=1 with this G2R
    ipa.nep[2] = True
    apply_event(ipa, rec(EventKind.G2R, 1, am=0.0, ap=0.0, bm=1.0, bp=0.0, x=(0, 0, 1, 0)))
    assert ipa.zeta[1] == 2 and ipa.rho[1] == 1
    assert np.array_equal(ipa.row(3), [2, 1, 0, 0])


def test_r2g2_in_queue2_scenario():
    ipa = IpaState((0, 1, 0, 0), 35.0, green0=(True, False, True, False))
    ipa.nep[1] = True
    apply_event(ipa, rec(EventKind.G2R, 1, t=15.0, x=(0, 3.75, 0, 0)))
    assert ipa.xprime[1, 0] == 0.0
    apply_event(ipa, rec(EventKind.R2G, 2, t=15.0, am=0.25, ap=0.25, bm=0.0, bp=1.0,
                         x=(0, 3.75, 0, 0)))
    assert ipa.xprime[1, 0] == 1.0


def test_accumulate_zero_rows():
    ipa = IpaState(W, 100.0)
    ipa.nep[:] = True
    accumulate(ipa, 0.0, 50.0)
    assert np.array_equal(ipa.dL, np.zeros(4))


def test_accumulate_queue2_interval():
    ipa = IpaState((0, 1, 0, 0), 35.0)
    ipa.nep[1] = True
    ipa.xprime[1, 0] = 1.0
    accumulate(ipa, 15.0, 20.0)
    assert ipa.dL[0] == pytest.approx(5 / 35, abs=1e-15)


def test_accumulate_is_additive():
    one, two = IpaState(W, 100.0), IpaState(W, 100.0)
    for ipa in (one, two):
        ipa.nep[:] = True
        ipa.xprime[:] = np.arange(16.0).reshape(4, 4)
    accumulate(one, 0.0, 7.5)
    accumulate(two, 0.0, 3.0)
    accumulate(two, 3.0, 7.5)
    assert np.allclose(one.dL, two.dL, rtol=1e-14, atol=0)


def test_out_of_order_events_rejected():
    ipa = IpaState(W, 100.0)
    apply_event(ipa, rec(EventKind.G2R, 1, t=15.0))
    with pytest.raises(ValueError):
        apply_event(ipa, rec(EventKind.R2G, 1, t=10.0))


def arrivals_trace(times, horizon=10.0):
    n = len(times)
    rf = np.zeros((n, 6))
    rf[:, 0] = times
    ri = np.column_stack((np.full(n, EventKind.ARR), np.ones(n, dtype=np.int64)))
    x = np.zeros((n, 4))
    green = np.zeros((n, 4), dtype=bool)
    return Trace("discrete", horizon, rf, ri, x, green, np.zeros(4), np.zeros(4),
                 (True, False, True, False), np.ones(4))


def test_rate_of_empty_window():
    assert estimate_rate(arrivals_trace([]), 5.0, "alpha", 1) == 0.0


def test_rate_direct_count():
    cfg = RateEstimatorConfig(window=3.0, direction="symmetric")
    assert estimate_rate(arrivals_trace([1.0, 2.0, 3.0]), 2.0, "alpha", 1, cfg) == 1.0


def test_rate_windows_by_direction():
    tr = arrivals_trace([1.0, 2.0, 3.0])
    assert estimate_rate(tr, 2.0, "alpha", 1, RateEstimatorConfig(2.0, "before")) == 1.0   # (0, 2]
    assert estimate_rate(tr, 2.0, "alpha", 1, RateEstimatorConfig(2.0, "after")) == 0.5    # (2, 4]
    with pytest.raises(ValueError):
        RateEstimatorConfig(window=0.0)
    with pytest.raises(ValueError):
        RateEstimatorConfig(direction="centered")


def test_rate_estimate_poisson_mean():
    tr = simulate(SimConfig(theta=(20, 20, 20, 20), seed=5, horizon=4200)).trace
    cfg = RateEstimatorConfig(window=20.0, direction="after")
    est = [estimate_rate(tr, 20.0 * k, "alpha", 2, cfg) for k in range(200)]
    assert np.mean(est) == pytest.approx(0.25, rel=0.2)


def test_fluid_rate_is_instantaneous():
    tr = simulate(queue2_scenario()).trace
    assert estimate_rate(tr, 5.0, "alpha", 2) == 0.25
    assert estimate_rate(tr, 17.0, "beta", 2) == 1.0
    assert estimate_rate(tr, 25.0, "beta", 2) == 0.25     # green and empty: passes inflow


@pytest.mark.parametrize("backend", ["discrete", "fluid"])
def test_zero_arrivals_zero_gradient(backend):
    res = simulate(SimConfig(arrival_rates=(0, 0, 0), backend=backend, theta=(20, 25, 30, 35)))
    assert np.array_equal(estimate_gradient(res.trace, W), np.zeros(4))


def test_queue2_gradient_oracle():
    # the peak a*theta1 drains over a*theta1/(H-a), so dL/dtheta1 = (5 + 0)/35 with the
    # triangle still closed before T
    cfg = queue2_scenario()
    g = estimate_gradient(simulate(cfg).trace, cfg.weights, horizon=35.0)
    assert g[0] == pytest.approx(5 / 35, abs=1e-9)
    assert g[2] == g[3] == 0.0


def test_gradient_horizon_must_match_trace():
    cfg = queue2_scenario()
    with pytest.raises(ValueError):
        estimate_gradient(simulate(cfg).trace, cfg.weights, horizon=40.0)


def fd_forward(cfg, i, d=1e-6):
    th = np.array(cfg.theta.as_array())
    th[i] += d
    return (simulate(cfg.with_theta(th)).L - simulate(cfg).L) / d


@pytest.mark.parametrize("theta", [(16, 20, 16, 20), (18, 22, 18, 22), (16, 16, 16, 16),
                                   (23, 19, 31, 17)])
@pytest.mark.parametrize("hold", [None, 50.0])
def test_fluid_matches_forward_difference(theta, hold):
    # also covers synchronized switching, where IPA gives the right-hand derivative
    cfg = SimConfig(theta=theta, backend="fluid", hold_mean=hold, horizon=300, seed=2)
    g = run_ipa(simulate(cfg).trace, cfg.weights).dL
    fd = [fd_forward(cfg, i) for i in range(4)]
    assert np.allclose(g, fd, rtol=1e-4, atol=1e-6)


def test_fluid_matches_central_difference_when_not_reordered():
    from tandem_tlc.baseline import compare_ipa_fd

    rng = np.random.default_rng(11)
    checked = 0
    for seed in range(12):
        cfg = SimConfig(theta=tuple(rng.uniform(16, 39, 4)), backend="fluid", horizon=300, seed=seed)
        cmp = compare_ipa_fd(cfg, delta=0.01)
        ok = ~cmp.reordered
        assert np.all(cmp.rel_err[ok] <= 1e-3)
        checked += int(ok.sum())
    assert checked >= 20


@pytest.mark.parametrize("backend", ["discrete", "fluid"])
def test_replay_is_bit_identical(backend):
    cfg = SimConfig(theta=(21, 17, 33, 16), backend=backend, seed=4)
    tr = simulate(cfg).trace
    a, b = run_ipa(tr, cfg.weights), run_ipa(tr, cfg.weights)
    assert np.array_equal(a.dL, b.dL) and np.array_equal(a.xprime, b.xprime)


def replay_rows(trace, weights):
    """xprime after every record, via the step-by-step interface."""
    ipa = IpaState(weights, trace.horizon, trace.service_rates, trace.green0)
    rows = []
    for k, event in enumerate(trace):
        accumulate(ipa, ipa.t_last, event.time)
        apply_event(ipa, event)
        rows.append((event, ipa.xprime.copy(), ipa.counters.copy()))
    return rows


@pytest.mark.parametrize("seed", range(3))
def test_reset_sparsity_and_counters(seed):
    cfg = SimConfig(theta=(22, 18, 27, 35), backend="fluid", seed=seed, horizon=500)
    tr = simulate(cfg).trace
    prev = np.zeros((2, 2))
    for event, xp, cnt in replay_rows(tr, cfg.weights):
        assert np.all(xp[:2, 2:] == 0.0)
        if event.kind == EventKind.E:
            assert np.all(xp[event.queue - 1] == 0.0)
        # light switches sharing a timestamp share the count
        upto = [np.sum(tr.select(kind, q) <= event.time) if tr.select(kind, q).size else 0
                for q in (1, 3) for kind in (EventKind.G2R, EventKind.R2G)]
        if event.kind in (EventKind.G2R, EventKind.R2G):
            inter = 0 if event.queue in (1, 2) else 1
            assert cnt[inter].tolist() == upto[2 * inter: 2 * inter + 2]
        assert np.all(cnt >= prev)
        prev = cnt


def test_gradient_csv(tmp_path):
    path = tmp_path / "g.csv"
    write_gradient_csv(path, [((15, 20, 15, 15), 1.0714, (0.142857, 0, 0, 0), 12, 0)])
    lines = path.read_text().splitlines()
    assert lines[0] == "theta1,theta2,theta3,theta4,L,dL1,dL2,dL3,dL4,n_events,n_degenerate"
    assert lines[1].endswith(",12,0")
