import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from kpascent.estimator import EstimatorConfig, EstimatorKind, EstimatorState
from kpascent.instance import benchmark_spec, generate, new_instance
from kpascent.oracle import dp_exact
from kpascent.problem import (TOY_OPTIMAL_VALUE, TOY_OPTIMUM, kp_problem,
                              toy_problem, valued_kp_problem)
from kpascent.solver import (DegenerateGradientError, SolverConfig, SolverState,
                             _batch, compute_beta, lagrangian, optimal_lambda,
                             repair_drop, solve, step)

THREE = new_instance([6, 10, 12], [1, 2, 3], 5)
PTE = EstimatorConfig(EstimatorKind.PTE)


# -- closed forms --------------------------------------------------------------

def test_optimal_lambda():
    assert optimal_lambda(4, 2) == 1
    assert optimal_lambda(-3, 1) == 0
    with pytest.raises(ValueError):
        optimal_lambda(1, 0)


def test_optimal_lambda_grid():
    grid = np.arange(0, 10 + 1e-9, 1e-4)
    assert grid[np.argmin(-grid * 4 + 2 * grid ** 2)] == pytest.approx(1, abs=1e-4)


def test_lagrangian():
    p = kp_problem(THREE)
    assert lagrangian(p, np.array([0, 1, 1]), 5) == 22
    # o=28, b=1, beta=4
    assert lagrangian(p, np.array([1, 1, 1]), 4) == 26
    assert lagrangian(p, np.array([1, 1, 1]), 0) == 28
    with pytest.raises(ValueError):
        lagrangian(p, np.array([1, 1, 1]), -1)


def test_compute_beta_branches():
    assert compute_beta(np.array([1.0, 0]), np.array([-1.0, 0]), 1, 0.1) == 0
    assert compute_beta(np.array([1.0, 1]), np.array([1.0, 0]), 1, 0.1) == 1.5
    assert compute_beta(np.array([2.0, 0]), np.array([1.0, 0]), 1, 0.1) == pytest.approx(12)
    # orthogonal gradients: lower = 0, beta = 1/(gamma b'.b')
    assert compute_beta(np.array([0.0, 1]), np.array([2.0, 0]), 1, 0.5) == pytest.approx(0.5)


def test_compute_beta_errors():
    with pytest.raises(ValueError):
        compute_beta(np.ones(2), np.ones(2), 0.0, 0.1)
    with pytest.raises(DegenerateGradientError):
        compute_beta(np.ones(2), np.zeros(2), 1.0, 0.1)


def test_compute_beta_parallel_rounding():
    # o' = k b' makes lower == upper; rounding must not pick the midpoint
    b = np.array([0.1, 0.7, 0.3])
    o = 3.0 * b
    beta = compute_beta(o, b, 0.37, 0.01)
    lower = (b @ o) / (0.37 * (b @ b))
    assert beta == pytest.approx(lower + 1 / (0.01 * (b @ b)))


# -- single steps ----------------------------------------------------------------

def test_step_plain_ascent():
    state = SolverState(EstimatorState.zeros(3))
    cfg = SolverConfig(learning_rate=0.1, minibatch_fraction=1.0, estimator=PTE)
    step(kp_problem(THREE), state, cfg, b_value=1.0, adapt_beta=False)
    np.testing.assert_allclose(state.theta, [0.6, 1.0, 1.2])


def test_step_with_adaptive_beta():
    state = SolverState(EstimatorState.zeros(3))
    cfg = SolverConfig(learning_rate=0.1, minibatch_fraction=1.0, estimator=PTE)
    step(kp_problem(THREE), state, cfg, b_value=1.0)
    # b'.o' = 62, b'.b' = 14, o'.o' = 280: lower 62/14 < upper 280/62
    assert state.beta == pytest.approx((62 / 14 + 280 / 62) / 2)
    assert state.beta == pytest.approx(4.4724, abs=1e-4)
    v, c = np.array([6, 10, 12]), np.array([1, 2, 3])
    np.testing.assert_allclose(state.theta, 0.1 * (v - state.beta * c))


def test_step_feasible_zeroes_beta():
    state = SolverState(EstimatorState.zeros(3), beta=7.0)
    step(kp_problem(THREE), state, SolverConfig(estimator=PTE), b_value=-1.0)
    assert state.beta == 0


def test_step_touches_only_the_batch():
    state = SolverState(EstimatorState.zeros(3))
    step(kp_problem(THREE), state, SolverConfig(estimator=PTE), 1.0, idx=np.array([1]))
    assert state.theta[0] == 0 and state.theta[2] == 0 and state.theta[1] != 0


def test_batch_size():
    rng = np.random.default_rng(0)
    assert len(_batch(rng, 10, 0.1)) == 1
    assert len(_batch(rng, 1000, 0.1)) == 100
    assert len(_batch(rng, 7, 0.5)) == 4
    assert _batch(rng, 10, 1.0) is None
    idx = _batch(rng, 100, 0.3)
    assert len(set(idx.tolist())) == 30


def test_degenerate_gradient_unstalls():
    # saturated sigmoids: the chained constraint gradient underflows to zero
    state = SolverState(EstimatorState(np.full(3, 1000.0)))
    step(kp_problem(THREE), state, SolverConfig(learning_rate=0.1), b_value=1.0)
    assert state.stalls == 1
    np.testing.assert_allclose(state.theta, 999.9)


# -- properties of the adaptive weight ------------------------------------------

vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8)


@settings(max_examples=300, deadline=None)
@given(vectors, vectors, st.floats(0.01, 100), st.floats(1e-3, 10))
def test_beta_above_lower_bound_decreases_b(o, b, b_val, margin):
    n = min(len(o), len(b))
    o, b = np.array(o[:n]), np.array(b[:n])
    bb = b @ b
    assume(bb > 1e-6)
    gamma = 1e-3
    lower = (b @ o) / (b_val * bb)
    beta = max(0.0, lower) + margin
    change = gamma * b @ (o - beta * b_val * b)
    assert change < 0


@settings(max_examples=300, deadline=None)
@given(vectors, vectors, st.floats(0.01, 100), st.floats(0, 1 - 1e-6))
def test_beta_below_upper_bound_keeps_o(o, b, b_val, u):
    n = min(len(o), len(b))
    o, b = np.array(o[:n]), np.array(b[:n])
    bo = b @ o
    assume(bo > 1e-6)
    upper = (o @ o) / (b_val * bo)
    beta = u * upper
    assert 1e-3 * o @ (o - beta * b_val * b) >= 0


@settings(max_examples=300, deadline=None)
@given(vectors, vectors, st.floats(1e-3, 100), st.floats(1e-4, 1))
def test_computed_beta_is_nonnegative_and_decreases_b(o, b, b_val, gamma):
    n = min(len(o), len(b))
    o, b = np.array(o[:n]), np.array(b[:n])
    assume(b @ b > 1e-6)
    beta = compute_beta(o, b, b_val, gamma)
    assert beta >= 0
    if b @ o >= 0:
        assert b @ (o - beta * b_val * b) < 0


def test_epsilon_branch_lands_on_the_budget():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 30))
        inst = new_instance(rng.integers(1, 1000, n), rng.integers(1, 1000, n), 10)
        theta = rng.uniform(0, 1, n)
        b_val = inst.costs @ theta - inst.budget
        if b_val <= 0:
            continue
        gamma = 0.1
        bb = inst.costs @ inst.costs
        state = SolverState(EstimatorState(theta.copy()))
        state.beta = (inst.costs @ inst.values) / (b_val * bb) + 1 / (gamma * bb)
        cfg = SolverConfig(learning_rate=gamma, minibatch_fraction=1.0, estimator=PTE)
        step(kp_problem(inst), state, cfg, b_val, adapt_beta=False)
        assert abs(inst.costs @ state.theta - inst.budget) <= 1e-9


# -- repair ---------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10**6), st.booleans())
def test_repair_restores_feasibility_minimally(n, seed, hinted):
    rng = np.random.default_rng(seed)
    inst = new_instance(rng.integers(1, 50, n), rng.integers(1, 50, n), int(rng.integers(1, 400)))
    x = rng.integers(0, 2, n).astype(np.float64)
    overrun = inst.cost(x) - inst.budget
    assume(overrun > 0)
    scores = rng.integers(-3, 3, n).astype(np.float64)
    hint = float(rng.integers(-3, 3)) if hinted else None
    drop, _ = repair_drop(inst, x, scores, overrun, hint)
    assert np.all(x[drop] == 1)
    fixed = x.copy()
    fixed[drop] = 0
    assert inst.is_feasible(fixed)
    # dropping one item fewer would still overrun
    assert inst.costs[drop[:-1]].sum() < overrun
    order = sorted(np.flatnonzero(x), key=lambda i: (scores[i], i))
    assert drop.tolist() == order[:len(drop)]


# -- full runs ------------------------------------------------------------------

def test_three_item_defaults_reach_optimum():
    sol = solve(kp_problem(THREE))
    assert sol.objective == 22 and sol.cost == 5 and sol.feasible
    assert sol.x.tolist() == [0, 1, 1]


@pytest.mark.parametrize("xi", [0.1, 1.0])
@pytest.mark.parametrize("kind", list(EstimatorKind))
def test_three_item_all_settings_feasible(xi, kind):
    sol = solve(kp_problem(THREE), SolverConfig(minibatch_fraction=xi,
                                                estimator=EstimatorConfig(kind)))
    assert sol.feasible and sol.cost <= 5


def test_roomy_budget_takes_everything():
    inst = new_instance([3, 1, 4, 1, 5], [9, 2, 6, 5, 3], 100)
    sol = solve(kp_problem(inst))
    assert sol.x.tolist() == [1] * 5 and sol.objective == 14


def test_toy_converges():
    sol = solve(toy_problem(), SolverConfig(learning_rate=0.01, minibatch_fraction=1.0),
                theta0=[0.3, 0.3])
    np.testing.assert_allclose(sol.x, TOY_OPTIMUM, atol=1e-2)
    assert sol.objective == pytest.approx(TOY_OPTIMAL_VALUE, abs=1e-2)
    assert sol.constraint <= 1e-6


def test_theta0_shape_checked():
    with pytest.raises(ValueError):
        solve(kp_problem(THREE), theta0=[0.0, 0.0])


def test_determinism_and_trace(tmp_path):
    inst = generate(benchmark_spec("weakly_correlated_span", 300, seed=2))
    cfg = SolverConfig(seed=17)
    a = solve(kp_problem(inst), cfg, trace_path=tmp_path / "a.jsonl")
    b = solve(kp_problem(inst), cfg, trace_path=tmp_path / "b.jsonl")
    assert a.x.tolist() == b.x.tolist() and a.epochs_run == b.epochs_run
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    lines = (tmp_path / "a.jsonl").read_text().splitlines()
    assert len(lines) == a.epochs_run
    rec = json.loads(lines[0])
    assert set(rec) == {"epoch", "objective", "constraint", "beta", "tau", "feasible"}


def test_trace_invariants():
    inst = generate(benchmark_spec("strongly_correlated", 200, seed=5))
    sol = solve(kp_problem(inst), SolverConfig(seed=1))
    for prev, cur in zip(sol.trace, sol.trace[1:]):
        if prev.feasible:
            assert cur.beta == 0
        assert cur.beta >= 0
        assert cur.epoch == prev.epoch + 1
    assert sol.epochs_run == len(sol.trace)


def test_patience_stops_the_run():
    sol = solve(kp_problem(THREE), SolverConfig(patience=3))
    assert sol.epochs_run <= 40


def test_max_epochs_caps_the_run():
    inst = generate(benchmark_spec("uncorrelated", 2000, seed=1))
    sol = solve(kp_problem(inst), SolverConfig(max_epochs=5))
    assert sol.epochs_run == 5 and sol.feasible


def test_literal_variant_still_feasible():
    inst = generate(benchmark_spec("strongly_correlated_span", 100, seed=0))
    sol = solve(kp_problem(inst), SolverConfig(repair=False, normalize_objective=False))
    assert sol.feasible


@pytest.mark.parametrize("init, param", [("constant", 0.5), ("gaussian", 0.1)])
def test_initializations(init, param):
    cfg = SolverConfig(init=init, init_param=param, seed=3)
    a = cfg.initial_parameters(5)
    assert np.array_equal(a, cfg.initial_parameters(5))
    sol = solve(kp_problem(THREE), cfg)
    assert sol.feasible


@pytest.mark.parametrize("kwargs", [
    dict(learning_rate=0), dict(minibatch_fraction=0), dict(minibatch_fraction=1.5),
    dict(patience=0), dict(max_epochs=0), dict(init="uniform"),
    dict(init="gaussian", init_param=0),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_nonlinear_value_assignment():
    # concave bonus for taking items 1 and 2 together
    v = THREE.values

    def g(x):
        return float(v @ x) + 5.0 * float(x[1] * x[2])

    def g_grad(xt):
        return v + 5.0 * np.array([0.0, xt[2], xt[1]])
    sol = solve(valued_kp_problem(THREE, g, g_grad), SolverConfig(minibatch_fraction=1.0))
    assert sol.feasible and sol.objective == 27


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["uncorrelated", "strongly_correlated", "inverse_strongly_correlated",
                        "uncorrelated_span"]),
       st.integers(1, 60), st.integers(0, 10**6), st.sampled_from(list(EstimatorKind)))
def test_solutions_always_feasible(label, n, seed, kind):
    inst = generate(benchmark_spec(label, n, seed=seed))
    sol = solve(kp_problem(inst), SolverConfig(seed=seed, estimator=EstimatorConfig(kind)))
    assert sol.feasible and sol.cost <= inst.budget
    assert sol.objective <= dp_exact(inst).objective
    best = -math.inf
    # the best snapshot never loses to a feasible epoch
    for rec in sol.trace:
        if rec.feasible:
            best = max(best, rec.objective)
    assert sol.objective >= best
