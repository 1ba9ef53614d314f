"""Constrained maximization problems ``max o(x) s.t. b(x) <= 0``.

Values are evaluated on the forward (rounded) bits; gradients are taken with
respect to the relaxed point produced by the estimator's backward pass and
chained onto the learnable parameters by :func:`chain_gradients`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .estimator import EstimatorConfig, EstimatorState, backward_relaxation
from .instance import KnapsackInstance

ValueFn = Callable[[np.ndarray], float]
GradFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ConstrainedProblem:
    dim: int
    objective_value: ValueFn
    objective_grad: GradFn
    constraint_value: ValueFn
    constraint_grad: GradFn
    uses_estimator: bool = True
    # Constant gradients of linear objectives/constraints.  When set, gradients
    # for a subset of coordinates are read off directly instead of calling the
    # gradient callbacks on the full relaxed point.
    objective_coef: Optional[np.ndarray] = None
    constraint_coef: Optional[np.ndarray] = None
    instance: Optional[KnapsackInstance] = None

    def is_feasible(self, x) -> bool:
        return self.constraint_value(x) <= 0

    def empty_selection(self) -> Optional[np.ndarray]:
        """A selection known to be feasible, or None if there is none to offer."""
        if self.instance is None:
            return None
        return np.zeros(self.dim, dtype=np.uint8)


def kp_problem(instance: KnapsackInstance) -> ConstrainedProblem:
    v, c, B = instance.values, instance.costs, instance.budget
    return ConstrainedProblem(
        dim=instance.n,
        objective_value=lambda x: float(v @ x),
        objective_grad=lambda xt: v,
        constraint_value=lambda x: float(c @ x) - B,
        constraint_grad=lambda xt: c,
        objective_coef=v,
        constraint_coef=c,
        instance=instance,
    )


def valued_kp_problem(instance: KnapsackInstance, value_fn: ValueFn,
                      value_grad: GradFn) -> ConstrainedProblem:
    """Knapsack whose objective is an arbitrary value assignment ``g(x)``.

    Only the instance's costs and budget are used; ``value_grad`` receives the
    relaxed point and must return an array of length ``instance.n``.
    """
    c, B = instance.costs, instance.budget
    return ConstrainedProblem(
        dim=instance.n,
        objective_value=lambda x: float(value_fn(x)),
        objective_grad=value_grad,
        constraint_value=lambda x: float(c @ x) - B,
        constraint_grad=lambda xt: c,
        constraint_coef=c,
        instance=instance,
    )


def toy_problem() -> ConstrainedProblem:
    """Maximize ``t1^2 + t2^2`` inside the unit disk centred at (1, 1)."""
    return ConstrainedProblem(
        dim=2,
        objective_value=lambda t: float(t[0] ** 2 + t[1] ** 2),
        objective_grad=lambda t: 2.0 * np.asarray(t, dtype=np.float64),
        constraint_value=lambda t: float((t[0] - 1) ** 2 + (t[1] - 1) ** 2 - 1),
        constraint_grad=lambda t: 2.0 * (np.asarray(t, dtype=np.float64) - 1.0),
        uses_estimator=False,
    )


TOY_OPTIMUM = np.array([1 + 1 / math.sqrt(2), 1 + 1 / math.sqrt(2)])
TOY_OPTIMAL_VALUE = 3 + 2 * math.sqrt(2)


def chain_gradients(problem: ConstrainedProblem, state: EstimatorState,
                    config: EstimatorConfig, idx=None):
    """Gradients of ``o`` and ``b`` w.r.t. the estimator parameters ``e``.

    With ``idx`` the result is restricted to those coordinates.
    """
    if not problem.uses_estimator:
        raise ValueError("problem is posed directly on its parameters")
    linear = problem.objective_coef is not None and problem.constraint_coef is not None
    if linear:
        _, dxde = backward_relaxation(state, config, idx)
        o_grad = problem.objective_coef if idx is None else problem.objective_coef[idx]
        b_grad = problem.constraint_coef if idx is None else problem.constraint_coef[idx]
        return o_grad * dxde, b_grad * dxde
    xt, dxde = backward_relaxation(state, config)
    o_grad = np.asarray(problem.objective_grad(xt), dtype=np.float64) * dxde
    b_grad = np.asarray(problem.constraint_grad(xt), dtype=np.float64) * dxde
    if idx is not None:
        return o_grad[idx], b_grad[idx]
    return o_grad, b_grad
