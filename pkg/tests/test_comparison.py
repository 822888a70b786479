import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rate_models
from markov_bsde import (
    RateModel,
    solve_markovian,
    table_driver,
    transition_matrix,
    zdrift_driver,
    zero_driver,
    znorm_driver,
)
from markov_bsde.comparison import (
    assumption_iii_point,
    balanced_check,
    check_comparison,
    default_eps,
    detect_dominance_arbitrage,
    essential_range,
    exhaustive_assumption_iii,
    run_counterexample,
    structural_violation,
)
from markov_bsde.bsde import DriverContext


def three_rate_one():
    A = np.ones((3, 3))
    np.fill_diagonal(A, -2.0)
    return RateModel.homogeneous(A, 1.0, 1.0)


@given(rate_models(max_states=5), st.integers(0, 2**31))
def test_zero_driver_satisfies_jump_drift_condition(model, seed):
    assert exhaustive_assumption_iii("4.2", zero_driver(), model, 300, seed).ok
    assert exhaustive_assumption_iii("5.1", zero_driver(2), model, 300, seed).ok


@given(rate_models(max_states=4), st.integers(0, 2**31))
def test_small_norm_penalty_is_harmless(model, seed):
    c = 0.9 * default_eps(model.epsilon_r, model.num_states)
    for sign in (1, -1):
        assert exhaustive_assumption_iii("4.2", znorm_driver(sign * c), model, 300, seed).ok


def test_jump_counting_driver_breaks_condition(three_state):
    v = exhaustive_assumption_iii("4.2", zdrift_driver(), three_state, 500, 0)
    assert not v.ok and v.witness.detail["margin"] <= 0


def test_point_check_reports_row():
    ctx = DriverContext.build([-1.0, 1.0], 0)
    ok, idx, _ = assumption_iii_point("5.1", zdrift_driver(2), 0.0, ctx, [0, 0], [0, 0], [[0, 0], [-0.5, 0.5]], np.zeros((2, 2)), 0.1)
    assert not ok and idx == 1
    with pytest.raises(ValueError):
        assumption_iii_point("9.9", zero_driver(), 0.0, ctx, 0, 0, [[0, 0]], [[0, 0]], 0.1)


@settings(max_examples=15)
@given(rate_models(max_states=4), st.integers(0, 2**31))
def test_ordered_terminals_give_ordered_values(model, seed):
    rng = np.random.default_rng(seed)
    g2 = rng.normal(size=model.num_states)
    g1 = g2 + np.abs(rng.normal(size=model.num_states)) * (rng.random(model.num_states) < 0.5)
    F = table_driver(np.zeros(model.num_states), beta=[[rng.normal()]])
    s1, s2 = solve_markovian(model, F, g1, step=0.02), solve_markovian(model, F, g2, step=0.02)
    rep = check_comparison("4.2", F, F, s1, s2)
    assert rep.ok, rep.summary()


def test_strictness_follows_reachability():
    # state 2 is absorbing, so from 2 only g(2) matters
    A = np.array([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 0.0]])
    model = RateModel.homogeneous(A, 1.0, 1.0)
    s1 = solve_markovian(model, zero_driver(), [1.0, 0.0, 0.0], step=0.05)
    s2 = solve_markovian(model, zero_driver(), [0.0, 0.0, 0.0], step=0.05)
    rep = check_comparison("4.2", zero_driver(), zero_driver(), s1, s2)
    assert rep.ok and rep.strictness.checked > 0


def test_driver_order_violation():
    model = three_rate_one()
    F1, F2 = table_driver(np.full(3, -1.0)), table_driver(np.zeros(3))
    s = solve_markovian(model, F1, [0.0, 0.0, 0.0], step=0.1)
    rep = check_comparison("4.2", F1, F2, s, s, conclusion=False)
    assert not rep.assumptions["ii_driver"].ok


def test_coupling_example():
    model = three_rate_one()
    beta = np.array([[0.0, 0.0], [1.0, 1.0]])
    F = table_driver(np.zeros((3, 2)), beta=beta)
    g1 = np.array([[1.0, 0.2], [0.5, 0.1], [0.0, 0.0]])
    g2 = np.zeros((3, 2))
    s1, s2 = solve_markovian(model, F, g1, step=1e-3), solve_markovian(model, F, g2, step=1e-3)
    for k in range(0, len(s1.times), 100):
        t = s1.times[k]
        tau = 1.0 - t
        E = transition_matrix(model, t, 1.0).T @ (g1 - g2)
        oracle = E @ np.array([[1.0, 0.0], [math.exp(tau) - 1, math.exp(tau)]]).T
        assert np.abs(s1.values[k] - s2.values[k] - oracle).max() < 1e-6
    rep = check_comparison("5.7", F, F, s1, s2)
    assert rep.ok, rep.summary()


def test_flipped_coupling_example():
    model = three_rate_one()
    F = table_driver(np.zeros((3, 2)), beta=[[0.0, 0.0], [-1.0, 1.0]])
    g1 = np.tile([1.0, 0.0], (3, 1))
    s1, s2 = solve_markovian(model, F, g1, step=1e-3), solve_markovian(model, F, np.zeros((3, 2)), step=1e-3)
    gap = s1.values[0, 0] - s2.values[0, 0]
    assert gap[1] == pytest.approx(-(math.e - 1), abs=1e-9)
    rep = check_comparison("5.7", F, F, s1, s2)
    assert not rep.assumptions["iii_jump_drift"].ok
    assert not rep.conclusion.ok


def test_structure_sampling():
    model = three_rate_one()
    assert structural_violation("5.7", znorm_driver(0.1, 2), model) is not None
    assert structural_violation("5.1", znorm_driver(0.1, 2), model) is None
    coupled = table_driver(np.zeros((3, 2)), beta=[[0.0, 0.0], [1.0, 1.0]])
    assert structural_violation("5.3", coupled, model) is not None
    assert structural_violation("5.7", coupled, model) is None


def test_balanced_drivers():
    model = three_rate_one()
    fam = lambda rng: (rng.normal(size=3), rng.normal(size=3))
    assert balanced_check(zero_driver(), fam, model, 0.0, 1.0, 5, 0).balanced
    assert balanced_check(znorm_driver(0.05), fam, model, 0.0, 1.0, 5, 0).balanced
    up = lambda rng: (np.abs(rng.normal(size=3)) + 1.0, np.zeros(3))
    v = balanced_check(zdrift_driver(), up, model, 0.0, 1.0, 5, 0)
    assert not v.balanced and v.witnesses


def test_dominance_detector():
    v = detect_dominance_arbitrage([0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 0.0])
    assert v.dominance and v.q_strict_frequency == 0.5
    v = detect_dominance_arbitrage([1.0, 1.0], None, [1.0, 0.0], None, mode="arbitrage")
    assert not v.dominance and v.q_ordered and not v.y_ordered
    with pytest.raises(ValueError):
        detect_dominance_arbitrage([0.0], [0.0], [1.0], [0.0], event=[False])


def test_unit_jump_counterexample():
    model = RateModel.homogeneous([[-1.0, 1.0], [1.0, -1.0]], 1.0, 1.0)
    res = run_counterexample("ex41", model, 1.0, 200, 3)
    assert res.dominance.dominance
    assert res.dominance.q_strict_frequency == 1.0
    assert np.all(res.y0 == 0.0)


def test_jump_counting_counterexample():
    res = run_counterexample("ex42", three_rate_one(), 1.0, 100, 4)
    assert np.all(res.y0 == 0.0)
    assert res.yT[:, 0].min() >= 1 - 1e-6
    assert abs(res.seminorm_sq_range[0] - 4) < 1e-10 and abs(res.seminorm_sq_range[1] - 4) < 1e-10
    assert not res.assumption_iii.ok
    with pytest.raises(ValueError):
        run_counterexample("ex42", RateModel.homogeneous([[-1.0, 1.0], [1.0, -1.0]], 1.0, 1.0), 1.0, 1, 0)


def test_essential_range():
    A = np.array([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 0.0]])
    model = RateModel.homogeneous(A, 1.0, 1.0)
    r = essential_range(model, 0, 1.0, [0.0, 2.0, 9.0], evaluation=1.0)
    assert (r.lower, r.upper, r.interior) == (0.0, 2.0, True)
    assert essential_range(model, 2, 1.0, [0.0, 2.0, 9.0], evaluation=9.0).interior
    assert not essential_range(model, 0, 1.0, [0.0, 2.0, 9.0], evaluation=2.0).interior
