"""Branch-and-bound over LP relaxations for binary MILPs (no cuts, no presolve)."""

from __future__ import annotations

import heapq
import itertools

import numpy as np

from .problem import MixedIntegerLinearProgram, SolveOutcome
from .simplex import MAX_PIVOTS, solve_standard

INT_TOL = 1e-6
GAP_TOL = 1e-6
MAX_NODES = 100_000


def branch_and_bound(milp: MixedIntegerLinearProgram, max_nodes: int = MAX_NODES,
                     max_pivots: int = MAX_PIVOTS) -> SolveOutcome:
    """Best-bound search; branches on the lowest-index fractional binary.

    Node ties (equal bounds) are resolved by insertion order.
    """
    lp = milp.lp
    binaries = sorted(milp.binaries)
    maximize = lp.sense == "max"
    sign = -1.0 if maximize else 1.0  # internal objective is minimized

    counter = itertools.count()
    root = (list(lp.lower), list(lp.upper))
    heap: list = [(-np.inf, next(counter), root)]
    best_x = None
    best_val = np.inf  # internal (minimized) incumbent value
    nodes = 0
    pivots = 0
    while heap:
        bound, _, (lo, hi) = heapq.heappop(heap)
        if bound >= best_val - GAP_TOL:
            continue
        if nodes >= max_nodes:
            return _finish("node-limit", lp, best_x, nodes, pivots)
        nodes += 1
        out = solve_standard(lp, lo, hi, max_pivots=max(1, max_pivots - pivots))
        pivots += out.iterations
        if out.status == "iteration-limit":
            return _finish("iteration-limit", lp, best_x, nodes, pivots)
        if out.status == "unbounded":
            return SolveOutcome("unbounded", iterations=pivots, nodes=nodes, backend="bnb")
        if out.status != "optimal":
            continue
        val = sign * out.objective
        if val >= best_val - GAP_TOL:
            continue
        frac = next((j for j in binaries if abs(out.x[j] - round(out.x[j])) > INT_TOL), None)
        if frac is None:
            x = out.x.copy()
            x[binaries] = np.round(x[binaries])
            best_x, best_val = x, val
            continue
        for fixed in (0.0, 1.0):
            clo, chi = list(lo), list(hi)
            clo[frac] = chi[frac] = fixed
            heapq.heappush(heap, (val, next(counter), (clo, chi)))
    return _finish("optimal" if best_x is not None else "infeasible", lp, best_x, nodes, pivots)


def _finish(status, lp, x, nodes, pivots) -> SolveOutcome:
    if x is None:
        return SolveOutcome(status, iterations=pivots, nodes=nodes, backend="bnb")
    return SolveOutcome(status, x=x, objective=lp.value(x), iterations=pivots, nodes=nodes, backend="bnb")
