import numpy as np
import pytest

from tandem_tlc.baseline import GridSpec, finite_difference_gradient, grid_costs, grid_search
from tandem_tlc.optimizer import estimate_J
from tandem_tlc.sim import SimConfig, seed_bank, simulate


def test_single_point_grid():
    cfg = SimConfig(seed=2, horizon=500)
    grid = GridSpec(ranges=((20, 20, 1), (25, 25, 1), (18, 18, 1), (30, 30, 1)), reps=4)
    res = grid_search(cfg, grid)
    assert np.array_equal(res.theta_best, [20, 25, 18, 30])
    J, err = estimate_J(cfg, (20, 25, 18, 30), reps=4)
    assert res.J_best == pytest.approx(J, rel=1e-12)
    assert res.table[0, 5] == pytest.approx(err, rel=1e-9)


def test_grid_is_exhaustive_and_best_is_minimum():
    grid = GridSpec(ranges=((15, 17, 1), (15, 18, 1.5), (20, 21, 1), (30, 30, 1)), reps=3)
    res = grid_search(SimConfig(seed=1, horizon=400), grid)
    assert len(res.table) == 3 * 3 * 2 * 1
    assert res.J_best == res.table[:, 4].min()
    assert np.all(res.table[:, 6] == 3)


def test_grid_matches_direct_simulation():
    # the split-by-queue evaluation must agree with full simulations
    cfg = SimConfig(seed=7, horizon=600, weights=(2, 1, 3, 1))
    grid = GridSpec(ranges=((15, 25, 5), (15, 25, 10), (16, 30, 7), (15, 40, 25)), reps=2)
    points, costs = grid_costs(cfg, grid)
    seeds = seed_bank(cfg.seed, 2)
    for p, row in zip(points, costs):
        direct = [simulate(cfg.with_theta(p).with_seed(int(s))).L for s in seeds]
        assert np.allclose(row, direct, rtol=1e-12, atol=1e-12)


def test_coupled_grid():
    grid = GridSpec(ranges=((15, 40, 1),) * 4, reps=1, coupling=(30, 31))
    pts = grid.points()
    assert len(pts) == 1 * 2
    assert np.all(pts[:, 0] + pts[:, 1] == 30) and np.all(pts[:, 2] + pts[:, 3] == 31)


def test_tie_goes_to_smallest_theta():
    grid = GridSpec(ranges=((15, 17, 1), (15, 15, 1), (15, 15, 1), (15, 15, 1)), reps=2)
    res = grid_search(SimConfig(arrival_rates=(0, 0, 0)), grid)
    assert np.array_equal(res.theta_best, [15, 15, 15, 15])


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(ranges=((15, 40, 0),) * 4)
    with pytest.raises(ValueError):
        GridSpec(ranges=((10, 40, 1),) * 4)


def test_fd_zero_arrivals():
    cfg = SimConfig(arrival_rates=(0, 0, 0))
    assert np.array_equal(finite_difference_gradient(cfg, (20, 20, 20, 20)), np.zeros(4))


def test_fd_queue2_oracle():
    cfg = SimConfig(theta=(15, 20, 15, 15), arrival_rates=(0, 0.25, 0), weights=(0, 1, 0, 0),
                    horizon=35.0, backend="fluid", hold_mean=None)
    g = finite_difference_gradient(cfg, (15, 20, 15, 15), delta=0.01)
    assert g[0] == pytest.approx(5 / 35, abs=1e-4)


def test_common_randomness_reduces_variance():
    th = (20.0, 20.0, 20.0, 20.0)
    crn, ind = [], []
    for s in seed_bank(0, 30):
        cfg = SimConfig(theta=th, seed=int(s), horizon=1000)
        crn.append(finite_difference_gradient(cfg, th, 0.01, "common"))
        ind.append(finite_difference_gradient(cfg, th, 0.01, "independent"))
    assert np.all(np.var(crn, axis=0) < np.var(ind, axis=0))
