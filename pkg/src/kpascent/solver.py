"""Adaptive gradient ascent on the squared-penalty Lagrangian.

The solver maximizes ``L = o(x) - beta/2 * max(0, b(x))**2`` by plain
gradient ascent on a random mini-batch of coordinates per epoch.  The
penalty weight ``beta`` is zero while the current selection is feasible and
is re-derived from the gradients whenever the budget is overrun, so that a
step shrinks the overrun while hurting the objective as little as possible.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .estimator import (EstimatorConfig, EstimatorKind, EstimatorState,
                        anneal_tau, backward_relaxation, forward)
from .problem import ConstrainedProblem, chain_gradients

log = logging.getLogger(__name__)


class DegenerateGradientError(ArithmeticError):
    """The constraint gradient vanishes on the coordinates being updated."""


@dataclass(frozen=True)
class SolverConfig:
    learning_rate: float = 0.1
    minibatch_fraction: float = 0.1
    patience: int = 100
    max_epochs: int = 100_000
    seed: int = 0
    init: str = "zero"          # zero | constant | gaussian
    init_param: float = 0.0     # the constant, or the gaussian std
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    normalize_objective: bool = True
    repair: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.minibatch_fraction <= 1:
            raise ValueError(f"minibatch_fraction must lie in (0, 1], got {self.minibatch_fraction}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.init not in ("zero", "constant", "gaussian"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "gaussian" and not self.init_param > 0:
            raise ValueError("gaussian init needs a positive std")

    def initial_parameters(self, n: int) -> np.ndarray:
        if self.init == "zero":
            return np.zeros(n)
        if self.init == "constant":
            return np.full(n, float(self.init_param))
        # separate stream from mini-batch sampling
        rng = np.random.default_rng([self.seed, 1])
        return rng.normal(0.0, self.init_param, size=n)


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    objective: float
    constraint: float
    beta: float
    tau: Optional[float]
    feasible: bool

    def to_json(self) -> str:
        return json.dumps({
            "epoch": self.epoch, "objective": self.objective,
            "constraint": self.constraint, "beta": self.beta,
            "tau": self.tau, "feasible": self.feasible,
        })


@dataclass
class SolverState:
    estimator_state: EstimatorState
    beta: float = 0.0
    tolerance: int = 0
    best_objective: float = -math.inf
    best_x: Optional[np.ndarray] = None
    trace: List[TraceRecord] = field(default_factory=list)
    stalls: int = 0

    @property
    def theta(self) -> np.ndarray:
        return self.estimator_state.e


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    constraint: float
    cost: float
    feasible: bool
    epochs_run: int
    wall_time: float
    stalls: int = 0
    trace: List[TraceRecord] = field(default_factory=list, repr=False)


def optimal_lambda(b_value: float, delta: float) -> float:
    """Minimizer over ``lam >= 0`` of ``-lam * b + delta * lam**2``."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return max(0.0, b_value / (2.0 * delta))


def lagrangian(problem: ConstrainedProblem, x, beta: float) -> float:
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    overrun = max(0.0, problem.constraint_value(x))
    return problem.objective_value(x) - 0.5 * beta * overrun ** 2


def compute_beta(o_grad, b_grad, b_value: float, learning_rate: float) -> float:
    """Penalty weight for a step taken while the constraint is violated.

    ``lower`` is the smallest weight for which the step decreases ``b``;
    ``upper`` is the largest for which it does not decrease ``o``.  If both
    can hold, take their midpoint.  Otherwise add the margin that, for a
    linear constraint, lands exactly on ``b = 0`` after one step.
    """
    if not b_value > 0:
        raise ValueError(f"beta is only adapted under a cost overrun, got b={b_value}")
    bb = float(b_grad @ b_grad)
    if bb == 0.0:
        raise DegenerateGradientError("constraint gradient is zero")
    bo = float(b_grad @ o_grad)
    if bo < 0:
        return 0.0
    lower = bo / (b_value * bb)
    if bo > 0:
        upper = float(o_grad @ o_grad) / (b_value * bo)
        # Parallel gradients make the bounds equal; rounding must not turn
        # that case into a midpoint step of length ~0.
        if lower < upper and not math.isclose(lower, upper, rel_tol=_BOUND_RTOL):
            return lower / 2 + upper / 2
    return lower + 1.0 / (learning_rate * bb)


_BOUND_RTOL = 1e-9


def _batch(rng: np.random.Generator, n: int, fraction: float) -> Optional[np.ndarray]:
    """Indices of the coordinates updated this epoch; None means all of them."""
    size = math.ceil(fraction * n - 1e-9)
    if size >= n:
        return None
    return np.sort(rng.choice(n, size, replace=False))


def _gradients(problem: ConstrainedProblem, state: SolverState,
               estimator: EstimatorConfig, idx):
    if problem.uses_estimator:
        return chain_gradients(problem, state.estimator_state, estimator, idx)
    theta = state.theta
    o_grad = np.asarray(problem.objective_grad(theta), dtype=np.float64)
    b_grad = np.asarray(problem.constraint_grad(theta), dtype=np.float64)
    if idx is not None:
        return o_grad[idx], b_grad[idx]
    return o_grad, b_grad


def step(problem: ConstrainedProblem, state: SolverState, config: SolverConfig,
         b_value: float, idx=None, *, adapt_beta: bool = True,
         learning_rate: Optional[float] = None) -> SolverState:
    """One ascent update of the coordinates ``idx`` (all if None), in place.

    ``b_value`` is the constraint value at the current forward bits.  With
    ``adapt_beta`` the penalty weight is recomputed from the gradients on
    ``idx`` before the update; otherwise ``state.beta`` is used as is.
    """
    gamma = config.learning_rate if learning_rate is None else learning_rate
    o_grad, b_grad = _gradients(problem, state, config.estimator, idx)
    overrun = max(0.0, b_value)
    if adapt_beta:
        if overrun > 0:
            try:
                state.beta = compute_beta(o_grad, b_grad, overrun, gamma)
            except DegenerateGradientError:
                _unstall(state, b_grad, gamma, idx)
                return state
        else:
            state.beta = 0.0
    direction = o_grad - (state.beta * overrun) * b_grad
    if idx is None:
        state.estimator_state.e += gamma * direction
    else:
        state.estimator_state.e[idx] += gamma * direction
    return state


def _unstall(state: SolverState, b_grad, gamma: float, idx) -> None:
    # Saturated sigmoids: pull the dead coordinates one step back toward zero.
    coords = np.arange(len(state.theta)) if idx is None else np.asarray(idx)
    dead = coords[b_grad == 0]
    state.theta[dead] -= gamma * np.sign(state.theta[dead])
    state.stalls += 1
    log.warning("vanishing constraint gradient on %d coordinates; pulled toward zero",
                len(dead))


def _objective_scale(problem, state, estimator) -> float:
    if problem.objective_coef is not None:
        g = problem.objective_coef
    else:
        xt, _ = backward_relaxation(state.estimator_state, estimator)
        g = np.asarray(problem.objective_grad(xt))
    scale = float(np.max(np.abs(g))) if len(g) else 0.0
    return scale if scale > 0 and math.isfinite(scale) else 1.0


def _integral_linear(problem: ConstrainedProblem) -> bool:
    inst = problem.instance
    if inst is None or problem.objective_coef is not problem.instance.values:
        return False
    limit = 2.0 ** 52
    return bool(np.all(inst.values == np.floor(inst.values))
                and np.all(inst.costs == np.floor(inst.costs))
                and inst.values.sum() < limit and inst.costs.sum() + inst.budget < limit)


def _slope_invariant(problem: ConstrainedProblem, estimator: EstimatorConfig) -> bool:
    # Rounding sigmoid(tau*e) at 1/2 depends only on sign(e), so bits change only
    # where e was updated.
    return (not problem.uses_estimator or estimator.kind is EstimatorKind.PTE
            or estimator.round_threshold == 0.5)


def repair_drop(instance, x: np.ndarray, scores: np.ndarray, overrun: float,
                hint: Optional[float] = None):
    """Indices to deselect from ``x`` so that its cost drops by at least ``overrun``.

    Selected items are dropped in increasing order of ``scores`` (ties by
    lower index), stopping as soon as the budget holds.  ``hint`` is a score
    cutoff expected to cover the dropped items; it only affects speed.
    Returns the indices and a cutoff to pass as the next ``hint``.
    """
    selected = x > 0
    costs = instance.costs
    cand = None
    if hint is not None:
        cand = np.flatnonzero((scores <= hint) & selected)
        if costs[cand].sum() < overrun:
            cand = None
    if cand is None:
        m = int(np.count_nonzero(selected))
        # unselected items are pushed to the far end without a branchy mask
        masked = scores + (1.0 - selected) * _FAR
        k = 2 * math.ceil(overrun / costs.max()) + 8
        while True:
            if k >= m - 1:
                cand = np.flatnonzero(selected)
                break
            cut = np.partition(masked, k)[k]
            cand = np.flatnonzero(masked <= cut)
            if costs[cand].sum() >= overrun:
                break
            k *= 2
    order = cand[np.lexsort((cand, scores[cand]))]
    dropped = np.cumsum(costs[order])
    j = int(np.searchsorted(dropped, overrun, side="left")) + 1
    margin = order[min(len(order), 2 * j + 8) - 1]
    return order[:j], float(scores[margin])


_FAR = 1e300


def solve(problem: ConstrainedProblem, config: SolverConfig = SolverConfig(),
          theta0=None, trace_path: Union[str, Path, None] = None) -> Solution:
    """Run adaptive gradient ascent and return the best feasible selection seen.

    Each epoch takes one ascent step on a random mini-batch, rounds, and
    counts down the patience unless a strictly better feasible selection was
    found.  With ``config.repair`` an over-budget selection of a knapsack
    binding is also decoded into a feasible one by dropping its
    lowest-scoring items, and that candidate competes for the best snapshot.
    For knapsack bindings the empty selection is the fallback, so the result
    always respects the budget.
    """
    start = time.perf_counter()
    n = problem.dim
    theta = config.initial_parameters(n) if theta0 is None else np.array(theta0, dtype=np.float64)
    if theta.shape != (n,):
        raise ValueError(f"theta0 must have shape ({n},), got {theta.shape}")
    est = config.estimator
    state = SolverState(EstimatorState(theta), tolerance=config.patience)
    rng = np.random.default_rng(config.seed)
    incremental = _slope_invariant(problem, est)
    inst = problem.instance
    linear_objective = problem.objective_coef is not None
    can_repair = config.repair and inst is not None and problem.uses_estimator

    lr = config.learning_rate
    if config.normalize_objective and problem.uses_estimator:
        lr /= _objective_scale(problem, state, est)

    # Integral linear data: per-batch updates of o and b are exact.
    exact_delta = incremental and problem.uses_estimator and _integral_linear(problem)

    def evaluate(x_prev, idx, o_prev=None, b_prev=None):
        if not problem.uses_estimator:
            x_new = state.theta.copy()
        elif x_prev is None or idx is None or not incremental:
            x_new = forward(state.estimator_state, est).astype(np.float64)
        else:
            bits = forward(state.estimator_state, est, idx)
            if exact_delta:
                delta = bits - x_prev[idx]
                x_prev[idx] = bits
                return (x_prev, o_prev + float(problem.objective_coef[idx] @ delta),
                        b_prev + float(problem.constraint_coef[idx] @ delta))
            x_prev[idx] = bits
            x_new = x_prev
        return x_new, problem.objective_value(x_new), problem.constraint_value(x_new)

    def snapshot(x):
        return x.astype(np.uint8) if problem.uses_estimator else x.copy()

    hint = None

    def consider(x, o_value, b_value) -> bool:
        """Offer the current selection (or its repair) as the new best."""
        nonlocal hint
        if b_value <= 0:
            if o_value > state.best_objective:
                state.best_objective = o_value
                state.best_x = snapshot(x)
                return True
            return False
        if not can_repair or (linear_objective and o_value <= state.best_objective):
            return False
        drop, hint = repair_drop(inst, x, state.theta, b_value, hint)
        if linear_objective:
            o_fixed = o_value - float(problem.objective_coef[drop].sum())
        else:
            trial = x.copy()
            trial[drop] = 0
            o_fixed = problem.objective_value(trial)
        if o_fixed <= state.best_objective:
            return False
        state.best_objective = o_fixed
        state.best_x = snapshot(x)
        state.best_x[drop] = 0
        return True

    # the starting selection competes too; it is not an epoch
    x, o_value, b_value = evaluate(None, None)
    consider(x, o_value, b_value)
    epoch = 0
    while True:
        idx = _batch(rng, n, config.minibatch_fraction)
        step(problem, state, config, b_value, idx, learning_rate=lr)
        beta_used = state.beta
        tau = anneal_tau(est, state.estimator_state.epoch) \
            if problem.uses_estimator and est.kind is EstimatorKind.STE else None
        x, o_value, b_value = evaluate(x, idx, o_value, b_value)
        feasible = b_value <= 0
        epoch += 1

        improved = consider(x, o_value, b_value)
        state.tolerance = config.patience if improved else state.tolerance - 1

        state.trace.append(TraceRecord(epoch, o_value, b_value, beta_used, tau, feasible))
        if state.tolerance <= 0 or epoch >= config.max_epochs:
            break
        if feasible:
            state.beta = 0.0
        state.estimator_state.epoch += 1

    if trace_path is not None:
        write_trace(state.trace, trace_path)
    return _solution(problem, state, x, epoch, time.perf_counter() - start)


def _solution(problem, state, last_x, epochs, elapsed) -> Solution:
    if state.best_x is not None:
        x = state.best_x
    else:
        x = problem.empty_selection()
        if x is None:
            x = last_x
    if problem.uses_estimator:
        x = np.asarray(x).astype(np.uint8)
    constraint = problem.constraint_value(x)
    inst = problem.instance
    cost = inst.cost(x) if inst is not None else constraint
    return Solution(
        x=x,
        objective=problem.objective_value(x),
        constraint=constraint,
        cost=cost,
        feasible=constraint <= 0,
        epochs_run=epochs,
        wall_time=elapsed,
        stalls=state.stalls,
        trace=state.trace,
    )


def write_trace(trace: List[TraceRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in trace:
            fh.write(rec.to_json() + "\n")
