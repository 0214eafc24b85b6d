import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from eegrad.core_math import EEGradParams, conf_radius_raw, quadratic_form_trace
from eegrad.oracle_model import GradientSample, OracleBank, draw_standard_normals
from eegrad.selector import (OracleStats, _scores, init_state, next_oracle, pseudo_regret,
                             run_iteration, run_iteration_batch, select_oracle, update_stats)

BANK3 = [50.0, 26.0, 16.7]


def identity_grad(w):
    return np.asarray(w, dtype=float)


def unit_params(T=20, d=1, alpha=3.0):
    return EEGradParams(alpha=alpha, beta=1.0, p_bound=1.0, dim=d, rounds=T)


def bank3_params(T, c=100.0):
    return EEGradParams(alpha=3.0, beta=60.0, p_bound=4.0, dim=2, rounds=T, c_const=c)


def push(state, oracle, value):
    return update_stats(state, oracle, GradientSample(np.atleast_1d(value), oracle))


def test_init_order():
    state = init_state(3, 1)
    order = []
    for _ in range(6):
        n = next_oracle(state, unit_params())
        order.append(n)
        push(state, n, 0.0)
    assert order == [1, 1, 2, 2, 3, 3]
    assert state.initialized


def test_single_oracle_always_selected(rng):
    bank = OracleBank.direct([2.0], identity_grad)
    out = run_iteration(bank, [1.0], unit_params(T=10), rng)
    assert out.pull_counts == [10]
    assert [n for _, n in out.pull_log] == [1] * 10


def test_select_before_init_raises():
    state = init_state(2, 1)
    push(state, 1, 0.0)
    with pytest.raises(RuntimeError):
        select_oracle(state, unit_params())


def test_select_smallest_variance_at_equal_pulls():
    state = init_state(3, 1)
    for n, v in zip((1, 2, 3), (5.0, 3.0, 4.0)):
        # two samples with spread sqrt(2v) give trace_cov = v
        push(state, n, 0.0)
        push(state, n, math.sqrt(2 * v))
    assert_allclose([s.trace_cov for s in state.stats], [5.0, 3.0, 4.0])
    assert select_oracle(state, unit_params()) == 2


def test_exploration_example():
    # V = (3, 3), pulls = (2, 9), t = e^2, alpha = 3, beta = P = c = d = 1
    p = unit_params()
    pulls = np.array([2.0, 9.0])
    sq_dev = np.array([3.0 * 1, 3.0 * 8])
    scores = _scores(pulls, sq_dev, math.e**2, p, 1.0)
    f = lambda x: conf_radius_raw(x, 1.0, 1.0, 1.0, 1)
    assert_allclose(scores, [3 - f(6.0), 3 - f(6 / 8)])
    assert_allclose(f(6.0), 6.0)
    assert_allclose(f(0.75), math.sqrt(0.75))
    assert int(np.argmin(scores)) + 1 == 1


def test_tie_break_lowest_index():
    state = init_state(3, 2)
    for n in (1, 2, 3):
        push(state, n, [0.0, 0.0])
        push(state, n, [1.0, 1.0])
    assert select_oracle(state, unit_params(d=2)) == 1


def test_trace_cov_examples():
    st_ = OracleStats(0, np.zeros(1))
    st_.push(np.array([0.0]))
    assert math.isnan(st_.trace_cov)
    st_.push(np.array([2.0]))
    assert_allclose(st_.trace_cov, 2.0)
    same = OracleStats(0, np.zeros(2))
    for _ in range(7):
        same.push(np.array([1.25, -3.0]))
    assert same.trace_cov == 0.0


@given(st.integers(2, 8), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_streaming_matches_batch_and_quadratic_form(gamma, d, seed):
    x = np.random.default_rng(seed).normal(1.0, 3.0, size=(gamma, d))
    s = OracleStats(0, np.zeros(d))
    for row in x:
        s.push(row)
    batch = float(np.trace(np.atleast_2d(np.cov(x.T, ddof=1))))
    assert_allclose(s.trace_cov, batch, rtol=1e-10, atol=1e-10)
    assert_allclose(quadratic_form_trace(x), batch, rtol=1e-10, atol=1e-10)


def test_streaming_fifty_samples():
    x = np.random.default_rng(5).normal(size=(50, 3))
    s = OracleStats(0, np.zeros(3))
    for row in x:
        s.push(row)
    assert_allclose(s.trace_cov, np.sum(x.var(axis=0, ddof=1)), rtol=1e-10)


def test_update_stats_validation():
    state = init_state(2, 2)
    with pytest.raises(ValueError):
        push(state, 1, [1.0])
    with pytest.raises(ValueError):
        push(state, 3, [1.0, 1.0])


def test_run_iteration_n1_mean_of_draws():
    bank = OracleBank.direct([2.0], identity_grad)
    w = np.array([1.0, -2.0])
    out = run_iteration(bank, w, unit_params(T=10, d=2), np.random.default_rng(9))
    z = draw_standard_normals(np.random.default_rng(9), 10, 2)
    draws = w + np.sqrt(2.0 * w**2) * z
    assert_allclose(out.gradient, draws.mean(axis=0), rtol=1e-14)
    assert out.pull_counts == [10]


def test_run_iteration_equal_bank_has_no_regret(rng):
    bank = OracleBank.direct([4.0, 4.0, 4.0], identity_grad)
    out = run_iteration(bank, [1.0, 1.0], unit_params(T=30, d=2), rng)
    assert out.pseudo_regret == 0.0
    assert sum(out.pull_counts) == 30


def test_run_iteration_rejects_short_horizon(rng):
    bank = OracleBank.direct(BANK3, identity_grad)
    with pytest.raises(ValueError, match="T >= 7"):
        run_iteration(bank, [1.0, 1.0], unit_params(T=6, d=2), rng)


def test_exclude_init_averages_selected_rounds_only():
    bank = OracleBank.direct([1.0], identity_grad)
    w = np.array([1.0])
    out = run_iteration(bank, w, unit_params(T=5), np.random.default_rng(1), include_init=False)
    z = draw_standard_normals(np.random.default_rng(1), 5, 1)
    assert_allclose(out.gradient, (w + np.abs(w) * z)[2:].mean(axis=0))


def test_pseudo_regret_formula():
    assert_allclose(pseudo_regret(BANK3, [10, 5, 85], 2.0), (33.3 * 10 + 9.3 * 5) * 2.0)


@pytest.mark.parametrize("include_init", [True, False])
def test_batch_matches_single_runs(include_init):
    bank = OracleBank.direct(BANK3, identity_grad)
    params = bank3_params(T=80)
    R, d = 6, 2
    w = np.random.default_rng(0).normal(size=(R, d))
    seeds = range(100, 100 + R)
    z = np.stack([draw_standard_normals(np.random.default_rng(s), 80, d) for s in seeds])
    G, pulls = run_iteration_batch(bank.sigma_sq, w, w**2, params, z, include_init=include_init)
    for r, s in enumerate(seeds):
        out = run_iteration(bank, w[r], params, np.random.default_rng(s), include_init=include_init)
        assert np.array_equal(G[r], out.gradient)
        assert list(pulls[r]) == out.pull_counts


def test_batch_shape_check():
    with pytest.raises(ValueError):
        run_iteration_batch(BANK3, np.ones((2, 2)), np.ones((2, 2)), bank3_params(10),
                            np.zeros((2, 9, 2)))


@pytest.mark.slow
def test_optimal_share_at_long_horizon():
    T, R = 3000, 200
    params = bank3_params(T=T)
    w = np.ones((R, 2))
    z = np.random.default_rng(77).standard_normal((R, T, 2))
    _, pulls = run_iteration_batch(BANK3, w, w**2, params, z, p_bound=np.full(R, 4.0))
    assert pulls[:, 2].mean() / T > 0.9
