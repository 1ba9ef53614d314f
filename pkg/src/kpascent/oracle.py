"""Reference solvers used to check the ascent solver.

``brute_force`` and ``dp_exact`` are exact and share a tie rule: among
optimal selections prefer the lowest cost, then the lexicographically
smallest bit vector.  ``greedy`` is the ratio-ordered baseline and
``dantzig_bound`` the LP-relaxation upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .instance import KnapsackInstance

BRUTE_FORCE_MAX_N = 25
SPLIT_ENUMERATION_MAX_N = 40
DP_MAX_CELLS = 50_000_000


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    x: Optional[np.ndarray]
    objective: float
    cost: float
    method: str


def _result(instance: KnapsackInstance, x: np.ndarray, method: str) -> OracleResult:
    x = x.astype(np.uint8)
    return OracleResult(x, instance.objective(x), instance.cost(x), method)


def brute_force(instance: KnapsackInstance, chunk_bits: int = 16) -> OracleResult:
    n = instance.n
    if n > BRUTE_FORCE_MAX_N:
        raise OracleError(f"brute force is limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    # Item 0 is the most significant bit, so numeric mask order is lexicographic order.
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    chunk = 1 << min(n, chunk_bits)
    best = (-np.inf, np.inf, -1)  # (value, cost, mask)
    for lo in range(0, 1 << n, chunk):
        masks = np.arange(lo, lo + chunk, dtype=np.int64)
        bits = ((masks[:, None] & weights) != 0).astype(np.float64)
        vals = bits @ instance.values
        costs = bits @ instance.costs
        vals[costs > instance.budget] = -np.inf
        top = vals.max()
        if top < best[0]:
            continue
        cand = np.flatnonzero(vals == top)
        j = cand[np.lexsort((masks[cand], costs[cand]))[0]]
        key = (float(top), float(costs[j]), int(masks[j]))
        if key[0] > best[0] or (key[0] == best[0] and key[1:] < best[1:]):
            best = key
    x = ((best[2] & weights) != 0)
    return _result(instance, x, "brute_force")


def _subset_sums(values: np.ndarray, costs: np.ndarray):
    m = len(values)
    masks = np.arange(1 << m, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(m)) & 1).astype(np.float64)
    return masks, bits @ values, bits @ costs


def split_enumeration(instance: KnapsackInstance) -> OracleResult:
    """Exact optimum by enumerating both halves of the items and joining them.

    Covers every subset, like ``brute_force``, in ``O(2**(n/2) * n)``; meant
    as a DP-independent check for n up to ``SPLIT_ENUMERATION_MAX_N``.  Among
    optimal selections any one may be returned.
    """
    n = instance.n
    if n > SPLIT_ENUMERATION_MAX_N:
        raise OracleError(f"split enumeration is limited to n <= {SPLIT_ENUMERATION_MAX_N}, got {n}")
    h = n // 2
    v, c, B = instance.values, instance.costs, instance.budget
    ma, va, ca = _subset_sums(v[:h], c[:h])
    mb, vb, cb = _subset_sums(v[h:], c[h:])
    # second half: best value reachable within each cost, as a staircase
    order = np.lexsort((-vb, cb))
    cb, vb, mb = cb[order], vb[order], mb[order]
    best_at = np.maximum.accumulate(vb)
    arg_at = np.flatnonzero(vb == best_at)  # positions where the running max is attained
    arg_at = arg_at[np.searchsorted(arg_at, np.arange(len(vb)), side="right") - 1]
    fits = ca <= B
    ma, va, ca = ma[fits], va[fits], ca[fits]
    j = np.searchsorted(cb, B - ca, side="right") - 1  # the empty subset always fits
    total = va + best_at[j]
    k = int(np.argmax(total))
    jb = arg_at[j[k]]
    x = np.zeros(n, dtype=np.uint8)
    x[:h] = (ma[k] >> np.arange(h)) & 1
    x[h:] = (mb[jb] >> np.arange(n - h)) & 1
    return _result(instance, x, "split_enumeration")


def dp_exact(instance: KnapsackInstance, max_cells: int = DP_MAX_CELLS) -> OracleResult:
    """Exact optimum by the O(n * B) dynamic program over integer capacities."""
    costs = instance.costs
    if not np.all(costs == np.floor(costs)):
        raise OracleError("dynamic programming needs integer costs")
    n = instance.n
    cap = int(np.floor(instance.budget))
    if (n + 1) * (cap + 1) > max_cells:
        raise OracleError(f"table of {(n + 1) * (cap + 1)} cells exceeds the cap of {max_cells}")
    w = costs.astype(np.int64)
    v = instance.values
    # table[i, r]: best value from items i.. with capacity r
    table = np.zeros((n + 1, cap + 1))
    for i in range(n - 1, -1, -1):
        nxt = table[i + 1]
        row = nxt.copy()
        if w[i] <= cap:
            np.maximum(row[w[i]:], nxt[:cap + 1 - w[i]] + v[i], out=row[w[i]:])
        table[i] = row
    opt = table[0, cap]
    r = int(np.argmax(table[0] == opt))  # least capacity reaching the optimum
    x = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        if table[i + 1, r] != table[i, r]:
            x[i] = 1
            r -= w[i]
    return _result(instance, x, "dp_exact")


def _ratio_order(instance: KnapsackInstance) -> np.ndarray:
    return np.argsort(-(instance.values / instance.costs), kind="stable")


def greedy(instance: KnapsackInstance, stop_at_first_misfit: bool = False) -> OracleResult:
    """Take items by decreasing value/cost ratio while they fit.

    By default items that do not fit are skipped and the scan continues.
    """
    order = _ratio_order(instance)
    costs = instance.costs[order]
    x = np.zeros(instance.n, dtype=np.uint8)
    remaining = instance.budget
    # every item of the leading run whose prefix cost fits is taken outright
    prefix = np.cumsum(costs)
    k = int(np.searchsorted(prefix, instance.budget, side="right"))
    x[order[:k]] = 1
    if k:
        remaining = instance.budget - prefix[k - 1]
    if not stop_at_first_misfit:
        min_cost = costs[k:].min() if k < instance.n else np.inf
        for j in range(k, instance.n):
            if remaining < min_cost:
                break
            if costs[j] <= remaining:
                x[order[j]] = 1
                remaining -= costs[j]
    return _result(instance, x, "greedy")


def dantzig_bound(instance: KnapsackInstance) -> float:
    order = _ratio_order(instance)
    values = instance.values[order]
    costs = instance.costs[order]
    prefix = np.cumsum(costs)
    k = int(np.searchsorted(prefix, instance.budget, side="right"))
    if k == instance.n:
        return float(values.sum())
    taken_value = float(values[:k].sum())
    left = instance.budget - (float(prefix[k - 1]) if k else 0.0)
    return taken_value + left * float(values[k] / costs[k])
