import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rate_models
from markov_bsde import (
    RateModel,
    forward_residual,
    forward_sde,
    simulate_path,
    solve_hitting_time,
    solve_markovian,
    table_driver,
    transition_matrix,
    z_at,
    zero_driver,
    znorm_driver,
)
from markov_bsde.bsde import pathwise_values


def test_zero_driver_is_conditional_expectation(two_state):
    grid = solve_markovian(two_state, zero_driver(), [1.0, 0.0], step=1e-3)
    assert grid.values[0, 0, 0] == pytest.approx((1 + math.exp(-2)) / 2, abs=1e-12)
    assert grid.values[0, 0, 0] == pytest.approx(0.567667, abs=1e-6)


@given(rate_models(max_states=4), st.integers(0, 2**31))
def test_zero_driver_matches_transition_matrix(model, seed):
    g = np.random.default_rng(seed).normal(size=model.num_states)
    grid = solve_markovian(model, zero_driver(), g, step=1e-2)
    for t in (0.0, 0.37):
        oracle = transition_matrix(model, t, 1.0).T @ g
        assert np.abs(grid.at(t)[:, 0] - oracle).max() < 1e-7 * (1 + np.abs(g).max())


def test_linear_in_y_driver_discounts(two_state):
    grid = solve_markovian(two_state, table_driver(np.zeros(2), beta=[[1.0]]), [1.0, 0.0], step=1e-3)
    assert grid.values[0, 0, 0] == pytest.approx(math.e * (1 + math.exp(-2)) / 2, abs=1e-12)


def test_z_carries_jump_sizes(two_state):
    grid = solve_markovian(two_state, zero_driver(), [1.0, 0.0], step=1e-3)
    Z = z_at(grid, 0.0, 0)
    assert Z[0, 1] - Z[0, 0] == pytest.approx(grid.values[0, 1, 0] - grid.values[0, 0, 0])
    assert Z[0, 1] - Z[0, 0] == pytest.approx(-math.exp(-2), abs=1e-12)
    assert abs(Z.sum()) < 1e-12


def test_fourth_order_in_step(three_state):
    F = znorm_driver(0.8)
    g = [1.0, 0.5, 0.0]
    ref = solve_markovian(three_state, F, g, step=1e-3).values[0]
    errs = [np.abs(solve_markovian(three_state, F, g, step=h).values[0] - ref).max() for h in (0.2, 0.1)]
    assert errs[1] < errs[0] / 8


@settings(max_examples=15)
@given(rate_models(max_states=4))
def test_flow_property(model):
    F = znorm_driver(0.3)
    g = np.linspace(0.0, 1.0, model.num_states)
    direct = solve_markovian(model, F, g, step=1e-2)
    inner = solve_markovian(model, F, g, step=1e-2, start=0.5)
    outer = solve_markovian(model, F, inner.values[0], T=0.5, step=1e-2)
    assert np.abs(outer.values[0] - direct.values[0]).max() < 1e-9


def test_hitting_probability():
    model = RateModel.homogeneous([[-1.0, 0.0], [1.0, 0.0]], 1.0, 1.0)
    grid = solve_hitting_time(model, zero_driver(), [0.0, 1.0], absorbing=[1], step=1e-3)
    assert grid.values[0, 0, 0] == pytest.approx(1 - math.exp(-1), abs=1e-12)


def test_absorbed_rows_stay_frozen(three_state):
    grid = solve_hitting_time(three_state, znorm_driver(0.2), [0.0, 1.0, 2.0], absorbing=[2], step=1e-2)
    assert np.all(grid.values[:, 2, 0] == 2.0)


def test_forward_residual_shrinks(three_state):
    F = znorm_driver(0.5)
    path = simulate_path(three_state, 0, 1.0, 4)
    res = [forward_residual(path, solve_markovian(three_state, F, [1.0, 0.5, 0.0], step=h)) for h in (1e-2, 1e-3)]
    assert res[1] < res[0] / 10
    assert res[1] < 1e-6


def test_forward_sde_reaches_terminal(three_state):
    F = znorm_driver(0.5)
    g = np.array([1.0, 0.5, 0.0])
    grid = solve_markovian(three_state, F, g, step=1e-3)
    path = simulate_path(three_state, 0, 1.0, 12)
    out = forward_sde(path, three_state, grid.values[0, 0], lambda t, h: z_at(grid, t, h.state), F, max_step=1e-3)
    assert abs(out.terminal[0] - g[path.terminal_state]) < 1e-5


def test_pathwise_decomposition(three_state):
    grid = solve_markovian(three_state, zero_driver(), [1.0, 0.5, 0.0], step=1e-3)
    path = simulate_path(three_state, 1, 1.0, 2)
    plain, mart = pathwise_values(path, grid)
    assert plain[0] == pytest.approx(grid.terminal[path.terminal_state, 0])
    assert abs(plain[0] - mart[0] - grid.values[0, 1, 0]) < 1e-6


def test_bad_inputs(two_state):
    with pytest.raises(ValueError):
        solve_markovian(two_state, zero_driver(2), [1.0, 0.0])
    with pytest.raises(ValueError):
        solve_markovian(two_state, zero_driver(), [1.0, 0.0], T=2.0)
    with pytest.raises(ValueError):
        solve_markovian(two_state, zero_driver(), [1.0, 0.0], step=0.0)
    bad = RateModel.homogeneous([[-1.0, 1.0], [2.0, -1.0]], 1.0, 0.5)
    with pytest.raises(ValueError, match="invalid rate model"):
        solve_markovian(bad, zero_driver(), [1.0, 0.0])


def test_spot_check_catches_false_flags(three_state):
    from markov_bsde import Driver

    liar = Driver(lambda t, y, Z, ctx: np.ones(1), normalized_at_zero=True, depends_on_z=False)
    assert "normalized_at_zero" in liar.spot_check(three_state)
    assert znorm_driver(0.4).spot_check(three_state) == []
