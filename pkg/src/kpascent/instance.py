"""Knapsack instances: validation, benchmark-family generation and CSV I/O.

Generated instances follow the classical Pisinger families.  All draws come
from ``numpy.random.Generator(PCG64(seed))`` so an instance is reproducible
from its :class:`GeneratorSpec` on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

PathLike = Union[str, Path]


class InstanceError(ValueError):
    """Base class for invalid instances and unreadable instance files."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class LengthMismatchError(InstanceError):
    pass


class NonPositiveEntryError(InstanceError):
    pass


class NonPositiveBudgetError(InstanceError):
    pass


class EmptyInstanceError(InstanceError):
    pass


class InstanceParseError(InstanceError):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class KnapsackInstance:
    values: np.ndarray
    costs: np.ndarray
    budget: float

    def __post_init__(self):
        values = _frozen(self.values)
        costs = _frozen(self.costs)
        if values.ndim != 1 or costs.ndim != 1:
            raise LengthMismatchError("values and costs must be one-dimensional")
        if len(values) != len(costs):
            raise LengthMismatchError(
                f"{len(values)} values but {len(costs)} costs")
        if len(values) == 0:
            raise EmptyInstanceError("no items")
        if not np.all(np.isfinite(values) & (values > 0)):
            i = int(np.argmin(np.isfinite(values) & (values > 0)))
            raise NonPositiveEntryError(f"value of item {i + 1} is not positive: {values[i]}")
        if not np.all(np.isfinite(costs) & (costs > 0)):
            i = int(np.argmin(np.isfinite(costs) & (costs > 0)))
            raise NonPositiveEntryError(f"cost of item {i + 1} is not positive: {costs[i]}")
        budget = float(self.budget)
        if not (math.isfinite(budget) and budget > 0):
            raise NonPositiveBudgetError(f"budget must be positive, got {budget}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "budget", budget)

    @property
    def n(self) -> int:
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, KnapsackInstance):
            return NotImplemented
        return (self.budget == other.budget
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.costs, other.costs))

    def __hash__(self):
        return hash((self.budget, self.values.tobytes(), self.costs.tobytes()))

    def __repr__(self):
        return f"KnapsackInstance(n={self.n}, budget={self.budget:g})"

    def objective(self, x) -> float:
        return float(self.values @ np.asarray(x, dtype=np.float64))

    def cost(self, x) -> float:
        return float(self.costs @ np.asarray(x, dtype=np.float64))

    def is_feasible(self, x) -> bool:
        return self.cost(x) <= self.budget


def new_instance(values: Sequence[float], costs: Sequence[float],
                 budget: float) -> KnapsackInstance:
    return KnapsackInstance(values, costs, budget)


# -- generation ---------------------------------------------------------------

class Family(str, Enum):
    UNCORRELATED = "uncorrelated"
    WEAKLY_CORRELATED = "weakly_correlated"
    STRONGLY_CORRELATED = "strongly_correlated"
    INVERSE_STRONGLY_CORRELATED = "inverse_strongly_correlated"


@dataclass(frozen=True)
class Spanner:
    size: int = 2        # number of base pairs
    multiplier: int = 10  # multipliers are drawn from 1..multiplier

    def __post_init__(self):
        if self.size < 1 or self.multiplier < 1:
            raise ValueError(f"spanner parameters must be >= 1, got {self}")


@dataclass(frozen=True)
class GeneratorSpec:
    family: Family
    n: int
    coef_range: int = 1000
    spanner: Optional[Spanner] = None
    budget_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.coef_range < 10:
            raise ValueError(f"coef_range must be >= 10, got {self.coef_range}")
        if not 0 < self.budget_fraction <= 1:
            raise ValueError(f"budget_fraction must lie in (0, 1], got {self.budget_fraction}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def label(self) -> str:
        name = self.family.value
        if self.spanner is not None:
            name += f"_span({self.spanner.size},{self.spanner.multiplier})"
        return name


# The six benchmark families used for the large-scale comparison.
BENCHMARK_FAMILIES = (
    ("uncorrelated_span", Family.UNCORRELATED, Spanner(2, 10)),
    ("weakly_correlated_span", Family.WEAKLY_CORRELATED, Spanner(2, 10)),
    ("strongly_correlated_span", Family.STRONGLY_CORRELATED, Spanner(2, 10)),
    ("strongly_correlated", Family.STRONGLY_CORRELATED, None),
    ("inverse_strongly_correlated", Family.INVERSE_STRONGLY_CORRELATED, None),
    ("uncorrelated", Family.UNCORRELATED, None),
)


def benchmark_spec(name: str, n: int, coef_range: int = 1000,
                   budget_fraction: float = 0.5, seed: int = 0) -> GeneratorSpec:
    for label, family, spanner in BENCHMARK_FAMILIES:
        if label == name:
            return GeneratorSpec(family, n, coef_range, spanner, budget_fraction, seed)
    raise KeyError(f"unknown benchmark family {name!r}")


def _draw_pairs(rng: np.random.Generator, family: Family, size: int, R: int):
    """Draw ``size`` (value, cost) pairs of one family with coefficients in [1, R]."""
    band = R // 10
    if family is Family.INVERSE_STRONGLY_CORRELATED:
        values = rng.integers(1, R, size=size, endpoint=True)
        return values, values + band
    costs = rng.integers(1, R, size=size, endpoint=True)
    if family is Family.UNCORRELATED:
        values = rng.integers(1, R, size=size, endpoint=True)
    elif family is Family.WEAKLY_CORRELATED:
        values = rng.integers(np.maximum(1, costs - band), costs + band, endpoint=True)
    else:
        values = costs + band
    return values, costs


def generate(spec: GeneratorSpec) -> KnapsackInstance:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.spanner is None:
        values, costs = _draw_pairs(rng, spec.family, spec.n, spec.coef_range)
    else:
        m = spec.spanner.multiplier
        base_v, base_c = _draw_pairs(rng, spec.family, spec.spanner.size, spec.coef_range)
        base_v = np.maximum(1, base_v // (m + 1))
        base_c = np.maximum(1, base_c // (m + 1))
        a = rng.integers(1, m, size=spec.n, endpoint=True)
        k = rng.integers(0, spec.spanner.size, size=spec.n)
        values, costs = a * base_v[k], a * base_c[k]
    values = values.astype(np.float64)
    costs = costs.astype(np.float64)
    budget = math.ceil(spec.budget_fraction * float(costs.sum()))
    return KnapsackInstance(values, costs, float(budget))


# -- CSV I/O ------------------------------------------------------------------

def _fmt(x: float) -> str:
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def write_instance(instance: KnapsackInstance, path: PathLike) -> None:
    lines = [f"n,{instance.n},budget,{_fmt(instance.budget)}"]
    lines.extend(f"{i},{_fmt(v)},{_fmt(c)}" for i, (v, c) in
                 enumerate(zip(instance.values.tolist(), instance.costs.tolist()), start=1))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _number(text: str, lineno: int, what: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise InstanceParseError(f"cannot parse {what} {text!r}", lineno) from None
    if not math.isfinite(x):
        raise InstanceParseError(f"{what} is not finite: {text!r}", lineno)
    return x


def read_instance(path: PathLike) -> KnapsackInstance:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InstanceParseError("empty file", 1)
    header = [f.strip() for f in lines[0].split(",")]
    if len(header) != 4 or header[0] != "n" or header[2] != "budget":
        raise InstanceParseError("expected header 'n,<n>,budget,<B>'", 1)
    try:
        n = int(header[1])
    except ValueError:
        raise InstanceParseError(f"cannot parse item count {header[1]!r}", 1) from None
    budget = _number(header[3], 1, "budget")
    if budget <= 0:
        raise NonPositiveBudgetError(f"budget must be positive, got {budget}", 1)

    rows = [(no, line) for no, line in enumerate(lines[1:], start=2) if line.strip()]
    if n <= 0 or not rows:
        raise EmptyInstanceError("no items", 1)
    if len(rows) != n:
        raise InstanceParseError(f"header announces {n} items, found {len(rows)}", 1)

    values = np.empty(n)
    costs = np.empty(n)
    for k, (lineno, line) in enumerate(rows):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise InstanceParseError(f"expected '<index>,<value>,<cost>', got {line!r}", lineno)
        if fields[0] != str(k + 1):
            raise InstanceParseError(f"expected index {k + 1}, got {fields[0]!r}", lineno)
        v = _number(fields[1], lineno, "value")
        c = _number(fields[2], lineno, "cost")
        if v <= 0:
            raise NonPositiveEntryError(f"value must be positive, got {v}", lineno)
        if c <= 0:
            raise NonPositiveEntryError(f"cost must be positive, got {c}", lineno)
        values[k] = v
        costs[k] = c
    return KnapsackInstance(values, costs, budget)
