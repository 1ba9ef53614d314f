"""Trajectory of the solver on the two-dimensional toy problem.

Writes one JSON line per epoch (the solver trace) plus the final iterate.

    python scripts/toy_trajectory.py --out toy.jsonl
"""

import argparse
import json

import numpy as np

from kpascent import SolverConfig, solve, toy_problem
from kpascent.problem import TOY_OPTIMAL_VALUE, TOY_OPTIMUM


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--gamma", type=float, default=0.01)
    ap.add_argument("--start", type=float, nargs=2, default=(0.3, 0.3))
    ap.add_argument("--out", default="toy_trace.jsonl")
    args = ap.parse_args()

    cfg = SolverConfig(learning_rate=args.gamma, minibatch_fraction=1.0)
    sol = solve(toy_problem(), cfg, theta0=list(args.start), trace_path=args.out)
    print(json.dumps({
        "x": sol.x.tolist(),
        "objective": sol.objective,
        "constraint": sol.constraint,
        "epochs": sol.epochs_run,
        "distance_to_optimum": float(np.max(np.abs(sol.x - TOY_OPTIMUM))),
        "objective_gap": sol.objective - TOY_OPTIMAL_VALUE,
    }, indent=2))


if __name__ == "__main__":
    main()
