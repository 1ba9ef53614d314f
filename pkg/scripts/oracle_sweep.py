"""Solver quality against the exact optimum on small instances, per family.

Also runs the ablations that switch off the objective-scaled step and the
repair decode, e.g.

    python scripts/oracle_sweep.py --n 100 --seeds 20 --ablations
"""

import argparse
import time

import numpy as np

from kpascent import (BENCHMARK_FAMILIES, SolverConfig, benchmark_spec, dantzig_bound,
                      dp_exact, generate, greedy, kp_problem, solve)

VARIANTS = {
    "default": {},
    "no-repair": {"repair": False},
    "no-normalize": {"normalize_objective": False},
    "literal": {"repair": False, "normalize_objective": False},
}


def sweep(n, seeds, overrides):
    rows = []
    for label, _, _ in BENCHMARK_FAMILIES:
        ratios, greedy_ratios, epochs, infeasible = [], [], [], 0
        for seed in range(seeds):
            inst = generate(benchmark_spec(label, n, seed=seed))
            ref = dp_exact(inst).objective if n <= 200 else dantzig_bound(inst)
            sol = solve(kp_problem(inst), SolverConfig(seed=seed, **overrides))
            infeasible += not sol.feasible
            ratios.append(sol.objective / ref)
            greedy_ratios.append(greedy(inst).objective / ref)
            epochs.append(sol.epochs_run)
        rows.append((label, np.mean(ratios), np.min(ratios), np.mean(greedy_ratios),
                     np.mean(epochs), infeasible))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--ablations", action="store_true")
    args = ap.parse_args()
    ref = "optimum" if args.n <= 200 else "Dantzig bound"
    for name in (VARIANTS if args.ablations else ["default"]):
        t = time.perf_counter()
        print(f"\n[{name}] ratios to {ref}, n={args.n}, {args.seeds} seeds")
        print(f"{'family':30s} {'mean':>7s} {'min':>7s} {'greedy':>7s} {'epochs':>7s} infeasible")
        for label, mean, low, g, ep, bad in sweep(args.n, args.seeds, VARIANTS[name]):
            print(f"{label:30s} {mean:7.4f} {low:7.4f} {g:7.4f} {ep:7.0f} {bad}")
        print(f"({time.perf_counter() - t:.1f} s)")


if __name__ == "__main__":
    main()
