import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from conftest import rate_models
from markov_bsde import ChainPath, random_rate_model, simulate_paths, solve_markovian, transition_matrix
from markov_bsde.linear import (
    LinearDriverSpec,
    LinearPreconditionError,
    adjoint_on_path,
    check_linear_conditions,
    closed_form_estimate,
    necessity_probe,
    product_integral,
    product_integral_inverse,
    random_linear_spec,
)

COUPLING = np.array([[0.0, 0.0], [1.0, 1.0]])


def test_constant_coupling_product_integral():
    tau = 0.7
    exact = np.eye(2) + (math.exp(tau) - 1) * COUPLING
    assert np.abs(expm(COUPLING * tau) - exact).max() < 1e-14
    plain = [np.abs(product_integral(lambda u: COUPLING, 0.0, tau, n) - exact).max() for n in (50, 100)]
    rich = np.abs(product_integral(lambda u: COUPLING, 0.0, tau, 50, richardson=True) - exact).max()
    assert plain[1] < plain[0] / 1.8  # first order
    assert rich < plain[1] / 10
    assert np.array_equal(product_integral(lambda u: np.zeros((3, 3)), 0.0, 1.0, 7), np.eye(3))


@given(st.integers(0, 2**31), st.integers(1, 4))
def test_metzler_generators_give_nonnegative_products(seed, K):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(K, K)), rng.normal(size=(K, K))
    off = ~np.eye(K, dtype=bool)
    A[off], B[off] = np.abs(A[off]), np.abs(B[off])
    out = product_integral(lambda u: A + u * B, 0.0, 1.5, 40)
    assert out.min() >= -1e-12

    def gap(n):
        H = lambda u: A + u * B
        return np.abs(product_integral(H, 0.0, 1.5, n) @ product_integral_inverse(H, 0.0, 1.5, n) - np.eye(K)).max()

    g1, g2 = gap(200), gap(400)
    assert g2 < 0.6 * g1 or g2 < 1e-12


def test_product_integral_rejects_empty_interval():
    with pytest.raises(ValueError):
        product_integral(lambda u: COUPLING, 1.0, 1.0, 4)


def test_trivial_adjoint(three_state):
    spec = LinearDriverSpec.make(three_state, np.zeros(2), np.zeros((2, 2)), np.zeros((2, 3)), np.zeros(2))
    path = simulate_paths(three_state, 0, 1.0, 1, 3)[0]
    seg = adjoint_on_path(path, spec, three_state)
    for s in (0.0, 0.3, 1.0):
        assert np.array_equal(seg.at(s), np.eye(2))


def test_jump_free_adjoint_is_exponential(three_state):
    rng = np.random.default_rng(4)
    spec = random_linear_spec(rng, three_state, 2)
    path = ChainPath(1, [], [], 1.0)
    H = spec.flow_generator(three_state, 0, 1)
    seg = adjoint_on_path(path, spec, three_state, t_start=0.2)
    assert np.abs(seg.at(0.9) - expm(H * 0.7)).max() < 1e-8


@settings(max_examples=20)
@given(rate_models(max_states=4), st.integers(0, 2**31), st.integers(1, 3))
def test_semigroup_and_inverse(model, seed, K):
    rng = np.random.default_rng(seed)
    spec = random_linear_spec(rng, model, K)
    if not check_linear_conditions(spec, model).invertible:
        return
    for path in simulate_paths(model, 0, 1.0, 5, seed):
        t, r, s = sorted(rng.uniform(0.0, 1.0, 3))
        full = adjoint_on_path(path, spec, model, t_start=t)
        tail = adjoint_on_path(path, spec, model, t_start=r)
        assert np.abs(full.at(r) @ tail.at(s) - full.at(s)).max() < 1e-8 * (1 + np.abs(full.at(s)).max())
        G = full.at(s)
        assert np.abs(G @ full.inverse_at(s) - np.eye(K)).max() < 1e-8


def test_condition_checker_examples(two_state):
    zero = LinearDriverSpec.make(two_state, [0.0], [[0.0]], np.zeros((1, 2)), [1.0])
    rep = check_linear_conditions(zero, two_state)
    assert rep.invertible and rep.nonnegative
    # psi^+ (e_1 - e_0) = (-1/2, 1/2) from state 0, so alpha = (0, -2) gives a factor of exactly 0
    bad = LinearDriverSpec.make(two_state, [0.0], [[0.0]], [[0.0, -2.0]], [1.0])
    rep = check_linear_conditions(bad, two_state)
    assert not rep.invertible
    assert rep.first_failure()[:3] == (0, 0, 1)
    with pytest.raises(LinearPreconditionError, match="state 0 -> 1"):
        closed_form_estimate(bad, [1.0, 0.0], two_state, 0, 1.0, 10, 0)


def test_rank_one_update_passes():
    model = random_rate_model(np.random.default_rng(2), 3, 1.0, 1, 0.5, 0.0)
    spec = random_linear_spec(np.random.default_rng(3), model, 3, nonnegative=True)
    rep = check_linear_conditions(spec, model)
    assert rep.invertible and rep.nonnegative


def test_necessity_probe_sees_negative_entry(two_state):
    spec = LinearDriverSpec.make(two_state, np.zeros(2), [[0.0, -1.0], [0.0, 0.0]], np.zeros((2, 2)), np.zeros(2))
    assert not check_linear_conditions(spec, two_state).nonnegative
    probes = necessity_probe(spec, two_state, 1e-3)
    assert probes and all(p.min_entry < 0 for p in probes)
    assert probes[0].min_entry == pytest.approx(probes[0].first_order, rel=1e-3)


def test_estimate_recovers_expectation(two_state):
    spec = LinearDriverSpec.make(two_state, [0.0], [[0.0]], np.zeros((1, 2)), [0.0])
    est = closed_form_estimate(spec, [1.0, 0.0], two_state, 0, 1.0, 4000, 1)
    p = transition_matrix(two_state, 0.0, 1.0)[0, 0]
    assert abs(est.mean[0] - p) < 3 * est.stderr[0]


def test_estimate_with_discounting(two_state):
    spec = LinearDriverSpec.make(two_state, [0.0], [[1.0]], np.zeros((1, 2)), [0.0])
    est = closed_form_estimate(spec, [1.0, 0.0], two_state, 0, 1.0, 4000, 2)
    oracle = math.e * (1 + math.exp(-2)) / 2  # 1.5430806...
    assert abs(est.mean[0] - oracle) < 3 * est.stderr[0]


def test_nonnegative_data_give_nonnegative_estimate(three_state):
    rng = np.random.default_rng(8)
    spec = random_linear_spec(rng, three_state, 2, nonnegative=True)
    spec = LinearDriverSpec(np.abs(spec.phi), spec.beta, spec.alpha, spec.gamma)
    est = closed_form_estimate(spec, np.abs(rng.normal(size=(3, 2))), three_state, 0, 1.0, 500, 5)
    assert est.min_gamma_entry >= -1e-10
    assert np.all(est.mean >= -3 * est.stderr)


def test_estimate_agrees_with_solver(three_state):
    rng = np.random.default_rng(21)
    spec = random_linear_spec(rng, three_state, 2)
    g = rng.normal(size=(3, 2))
    est = closed_form_estimate(spec, g, three_state, 0, 1.0, 3000, 6)
    u = solve_markovian(three_state, spec.driver(), g, step=1e-3).values[0, 0]
    assert np.all(np.abs(est.mean - u) < 3.5 * est.stderr)
