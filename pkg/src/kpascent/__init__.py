"""Large-scale 0-1 knapsack by adaptive gradient ascent over binary estimators."""

from .estimator import (EstimatorConfig, EstimatorKind, EstimatorState,
                        anneal_tau, backward_relaxation, forward)
from .instance import (BENCHMARK_FAMILIES, Family, GeneratorSpec, InstanceError,
                       KnapsackInstance, Spanner, benchmark_spec, generate,
                       new_instance, read_instance, write_instance)
from .oracle import (OracleError, OracleResult, brute_force, dantzig_bound, dp_exact,
                     greedy, split_enumeration)
from .problem import (ConstrainedProblem, chain_gradients, kp_problem,
                      toy_problem, valued_kp_problem)
from .solver import (Solution, SolverConfig, SolverState, compute_beta,
                     lagrangian, optimal_lambda, solve, step)

__version__ = "0.1.0"
