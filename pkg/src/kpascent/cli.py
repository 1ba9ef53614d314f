"""Command-line entry point: ``kpascent generate | solve | verify | bench``.

Reports are single JSON documents on stdout.  Exit codes: 0 ok, 1 runtime
error, 2 usage error, 3 verification failure.  ``KP_SEED`` supplies the seed
when ``--seed`` is not given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .estimator import EstimatorConfig, EstimatorKind
from .instance import (BENCHMARK_FAMILIES, Family, GeneratorSpec, InstanceError,
                       KnapsackInstance, Spanner, benchmark_spec, generate,
                       read_instance, write_instance)
from .oracle import (BRUTE_FORCE_MAX_N, DP_MAX_CELLS, SPLIT_ENUMERATION_MAX_N,
                     OracleError, brute_force, dantzig_bound, dp_exact, greedy,
                     split_enumeration)
from .problem import kp_problem
from .solver import SolverConfig, solve

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("kpascent")


class UsageError(Exception):
    pass


@dataclass
class RunReport:
    instance: dict          # family, n, R, seed, B
    method: str
    objective: float
    cost: float
    feasible: bool
    ratio_to_bound: float
    ratio_to_optimum: Optional[float]
    epochs: int
    wall_time_s: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False)


# -- argument helpers -----------------------------------------------------------

def _family_key(name: str) -> str:
    return name.strip().lower().replace("-", "_")


def _base_family(name: str) -> Family:
    try:
        return Family(_family_key(name))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown family {name!r}; choose from "
            + ", ".join(f.value for f in Family)) from None


def _benchmark_family(name: str) -> str:
    key = _family_key(name)
    labels = [label for label, _, _ in BENCHMARK_FAMILIES]
    if key not in labels:
        raise argparse.ArgumentTypeError(
            f"unknown benchmark family {name!r}; choose from " + ", ".join(labels))
    return key


def _spanner(text: str) -> Spanner:
    try:
        size, mult = (int(t) for t in text.split(","))
        return Spanner(size, mult)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected --spanner V,M with positive integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        value = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _default_seed() -> int:
    text = os.environ.get("KP_SEED")
    if text is None or text == "":
        return 0
    try:
        seed = int(text)
    except ValueError:
        raise UsageError(f"KP_SEED must be an integer, got {text!r}") from None
    if not 0 <= seed < 2**64:
        raise UsageError(f"KP_SEED out of range: {seed}")
    return seed


def _default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--estimator", choices=[k.value for k in EstimatorKind], default="ste")
    g.add_argument("--gamma", type=float, default=0.1, help="learning rate")
    g.add_argument("--xi", type=float, default=0.1, help="mini-batch fraction")
    g.add_argument("--patience", type=_positive_int, default=100)
    g.add_argument("--max-epochs", type=_positive_int, default=100_000)
    g.add_argument("--anneal-step", type=float, default=50.0)
    g.add_argument("--anneal-rate", type=float, default=1.01)
    g.add_argument("--no-repair", action="store_true",
                   help="do not decode over-budget selections into feasible ones")
    g.add_argument("--no-normalize", action="store_true",
                   help="use the raw learning rate instead of scaling by max |v|")
    g.add_argument("--no-timing", action="store_true",
                   help="report wall_time_s as null so reports are byte-reproducible")


def _add_generator_flags(p: argparse.ArgumentParser, n_default=None) -> None:
    g = p.add_argument_group("instance generation")
    g.add_argument("--n", type=_positive_int, default=n_default)
    g.add_argument("--R", type=_positive_int, default=1000, help="coefficient range")
    g.add_argument("--budget-fraction", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=None)


def _solver_config(args, seed: int) -> SolverConfig:
    kind = EstimatorKind(args.estimator)
    try:
        est = (EstimatorConfig(kind, change_rate=args.anneal_rate, step=args.anneal_step)
               if kind is EstimatorKind.STE else EstimatorConfig(kind))
        return SolverConfig(
            learning_rate=args.gamma,
            minibatch_fraction=args.xi,
            patience=args.patience,
            max_epochs=args.max_epochs,
            seed=seed,
            estimator=est,
            normalize_objective=not args.no_normalize,
            repair=not args.no_repair,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _generator_spec(args, seed: int, family=None, label=None) -> GeneratorSpec:
    try:
        if label is not None:
            return benchmark_spec(label, args.n, args.R, args.budget_fraction, seed)
        return GeneratorSpec(family, args.n, args.R, args.spanner,
                             args.budget_fraction, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _seed(args) -> int:
    seed = _default_seed() if args.seed is None else args.seed
    if not 0 <= seed < 2**64:
        raise UsageError(f"seed out of range: {seed}")
    return seed


# -- single runs (also executed in worker processes) ------------------------------

def _exact_optimum(instance: KnapsackInstance) -> Optional[float]:
    try:
        return dp_exact(instance).objective
    except OracleError:
        return None


def _ratio(value: float, ref: Optional[float]) -> Optional[float]:
    if ref is None:
        return None
    return value / ref if ref > 0 else 1.0


def make_report(instance: KnapsackInstance, descriptor: dict, method: str, x,
                epochs: int, wall_time: Optional[float], bound: float,
                optimum: Optional[float]) -> RunReport:
    objective = instance.objective(x)
    return RunReport(
        instance=descriptor,
        method=method,
        objective=objective,
        cost=instance.cost(x),
        feasible=instance.is_feasible(x),
        ratio_to_bound=_ratio(objective, bound),
        ratio_to_optimum=_ratio(objective, optimum),
        epochs=epochs,
        wall_time_s=wall_time,
    )


def _descriptor(spec: Optional[GeneratorSpec], instance: KnapsackInstance,
                family: Optional[str] = None) -> dict:
    if spec is None:
        return {"family": None, "n": instance.n, "R": None, "seed": None,
                "B": instance.budget}
    return {"family": family or spec.label, "n": spec.n, "R": spec.coef_range,
            "seed": spec.seed, "B": instance.budget}


@dataclass(frozen=True)
class _Task:
    index: int
    family: str
    spec: GeneratorSpec
    config: SolverConfig
    timing: bool
    exact: bool
    brute: bool = False


def _run_task(task: _Task) -> dict:
    instance = generate(task.spec)
    desc = _descriptor(task.spec, instance, task.family)
    bound = dantzig_bound(instance)
    optimum = _exact_optimum(instance) if task.exact else None
    sol = solve(kp_problem(instance), task.config)
    out = {
        "index": task.index,
        "solver": make_report(instance, desc, "adaptive_ascent", sol.x, sol.epochs_run,
                              sol.wall_time if task.timing else None, bound, optimum),
        "greedy": make_report(instance, desc, "greedy", greedy(instance).x, 0,
                              None, bound, optimum),
    }
    if task.brute:
        # past the plain enumeration limit, enumerate the two halves instead
        enum = brute_force if instance.n <= BRUTE_FORCE_MAX_N else split_enumeration
        out["brute_match"] = enum(instance).objective == optimum
    return out


def _run_all(tasks: List[_Task], jobs: int) -> List[dict]:
    if jobs <= 1 or len(tasks) <= 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_task, tasks))
    return sorted(results, key=lambda r: r["index"])


# -- subcommands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.n is None:
        raise UsageError("--n is required")
    spec = _generator_spec(args, _seed(args), family=args.family)
    instance = generate(spec)
    write_instance(instance, args.out)
    print(_dump({"path": str(args.out), "family": spec.label, "n": instance.n,
                 "B": instance.budget, "total_cost": float(instance.costs.sum())}))
    return EXIT_OK


def cmd_solve(args) -> int:
    seed = _seed(args)
    config = _solver_config(args, seed)
    if args.instance is not None:
        if args.family is not None or args.n is not None:
            raise UsageError("--instance cannot be combined with generator flags")
        instance = read_instance(args.instance)
        spec = None
    else:
        if args.family is None or args.n is None:
            raise UsageError("give --instance PATH or both --family and --n")
        spec = _generator_spec(args, seed, family=args.family)
        instance = generate(spec)
    sol = solve(kp_problem(instance), config, trace_path=args.trace)
    report = make_report(instance, _descriptor(spec, instance), "adaptive_ascent", sol.x,
                         sol.epochs_run, None if args.no_timing else sol.wall_time,
                         dantzig_bound(instance), _exact_optimum(instance))
    print(_dump(report.to_dict()))
    return EXIT_OK


def _families(args) -> List[str]:
    return args.family or [label for label, _, _ in BENCHMARK_FAMILIES]


def cmd_verify(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    if args.brute_force and args.n > SPLIT_ENUMERATION_MAX_N:
        raise UsageError(f"--brute-force needs --n <= {SPLIT_ENUMERATION_MAX_N}")
    base = _seed(args)
    config = _solver_config(args, base)
    tasks = []
    for family in _families(args):
        for k in range(args.count):
            spec = _generator_spec(args, base + k, label=family)
            cells = (args.n + 1) * (args.budget_fraction * args.n * args.R + 2)
            if cells > DP_MAX_CELLS:
                raise UsageError(f"n={args.n} is too large for the exact oracle")
            tasks.append(_Task(len(tasks), family, spec,
                               replace(config, seed=base + k), False, True, args.brute_force))
    results = _run_all(tasks, args.jobs)

    blocks = {}
    ok = True
    for family in _families(args):
        rows = [r for r in results if r["solver"].instance["family"] == family]
        solver_r = [r["solver"].ratio_to_optimum for r in rows]
        greedy_r = [r["greedy"].ratio_to_optimum for r in rows]
        feasible = sum(r["solver"].feasible for r in rows)
        block = {
            "count": len(rows),
            "feasible": feasible,
            "solver_ratio_mean": float(np.mean(solver_r)),
            "solver_ratio_min": float(np.min(solver_r)),
            "greedy_ratio_mean": float(np.mean(greedy_r)),
            "greedy_ratio_min": float(np.min(greedy_r)),
        }
        if args.brute_force:
            block["brute_force_mismatches"] = sum(not r["brute_match"] for r in rows)
            ok = ok and block["brute_force_mismatches"] == 0
        ok = ok and feasible == len(rows)
        blocks[family] = block
    print(_dump({"n": args.n, "count": args.count, "seed": base, "R": args.R,
                 "budget_fraction": args.budget_fraction, "families": blocks,
                 "ok": ok}))
    return EXIT_OK if ok else EXIT_VERIFY


def _table(rows: List[dict]) -> str:
    head = ("family", "n", "time (s)", "objective", "ratio to bound", "greedy ratio")
    lines = []
    for r in rows:
        s, g = r["solver"], r["greedy"]
        t = "-" if s.wall_time_s is None else f"{s.wall_time_s:.2f}"
        lines.append((s.instance["family"], str(s.instance["n"]), t, f"{s.objective:.0f}",
                      f"{s.ratio_to_bound:.6f}", f"{g.ratio_to_bound:.6f}"))
    widths = [max(len(h), *(len(l[i]) for l in lines)) for i, h in enumerate(head)]
    fmt = lambda cols: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                 for i, (c, w) in enumerate(zip(cols, widths)))
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(l) for l in lines])


def cmd_bench(args) -> int:
    base = _seed(args)
    config = _solver_config(args, base)
    tasks = []
    for family in _families(args):
        spec = _generator_spec(args, base, label=family)
        for _ in range(args.repeat):
            tasks.append(_Task(len(tasks), family, spec, config, not args.no_timing, False))
    results = _run_all(tasks, args.jobs)
    print(_table(results), file=sys.stderr)
    doc = {"n": args.n, "seed": base, "repeat": args.repeat,
           "runs": [{"solver": r["solver"].to_dict(), "greedy": r["greedy"].to_dict()}
                    for r in results]}
    print(_dump(doc))
    feasible = all(r["solver"].feasible for r in results)
    return EXIT_OK if feasible else EXIT_VERIFY


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpascent", description="0-1 knapsack by adaptive gradient ascent")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a benchmark instance as CSV")
    p.add_argument("--family", type=_base_family, required=True)
    p.add_argument("--spanner", type=_spanner, default=None, metavar="V,M")
    _add_generator_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one instance and print a JSON report")
    p.add_argument("--instance", default=None, help="CSV instance file")
    p.add_argument("--family", type=_base_family, default=None)
    p.add_argument("--spanner", type=_spanner, default=None, metavar="V,M")
    _add_generator_flags(p)
    _add_solver_flags(p)
    p.add_argument("--trace", default=None, help="write per-epoch JSON lines here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="compare against the exact and greedy oracles")
    p.add_argument("--family", type=_benchmark_family, action="append")
    _add_generator_flags(p, n_default=100)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--brute-force", action="store_true",
                   help="also cross-check the DP optimum by enumeration")
    p.add_argument("--jobs", type=_positive_int, default=_default_jobs())
    _add_solver_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time the solver on large benchmark instances")
    p.add_argument("--family", type=_benchmark_family, action="append")
    _add_generator_flags(p, n_default=1_000_000)
    p.add_argument("--repeat", type=_positive_int, default=1)
    p.add_argument("--jobs", type=_positive_int, default=_default_jobs())
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"kpascent: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InstanceError, OracleError, OSError) as exc:
        print(f"kpascent: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything else is still a runtime failure, not a crash
        log.debug("unexpected failure", exc_info=True)
        print(f"kpascent: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
