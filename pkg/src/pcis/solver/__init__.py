"""LP and MILP solving behind a narrow contract.

The reference backends are a dense Bland-rule simplex and best-bound
branch-and-bound. ``backend="highs"`` routes the same problem through
SciPy's HiGHS bindings for instances too large for the reference code.
"""

from __future__ import annotations

import warnings

import numpy as np

from .bnb import MAX_NODES, branch_and_bound
from .lpformat import to_lp_format
from .problem import INF, LinearProgram, MixedIntegerLinearProgram, ProblemError, SolveOutcome
from .simplex import MAX_PIVOTS, solve_standard

__all__ = [
    "INF",
    "LinearProgram",
    "MixedIntegerLinearProgram",
    "ProblemError",
    "SolveOutcome",
    "solve_lp",
    "solve_milp",
    "to_lp_format",
]

# Above these sizes "auto" hands problems to HiGHS.
AUTO_BNB_LIMIT = 40
AUTO_SIMPLEX_LIMIT = 150


def solve_lp(lp: LinearProgram, backend: str = "simplex", max_pivots: int = MAX_PIVOTS) -> SolveOutcome:
    lp.check()
    if backend == "auto":
        backend = "simplex" if lp.n_vars <= AUTO_SIMPLEX_LIMIT else "highs"
    if backend == "simplex":
        return solve_standard(lp, max_pivots=max_pivots)
    if backend == "highs":
        return _highs_lp(lp)
    raise ValueError(f"unknown LP backend {backend!r}")


def solve_milp(milp: MixedIntegerLinearProgram, backend: str = "auto",
               max_nodes: int = MAX_NODES) -> SolveOutcome:
    milp.check()
    if backend == "auto":
        backend = "bnb" if len(milp.binaries) <= AUTO_BNB_LIMIT else "highs"
    if backend == "bnb":
        return branch_and_bound(milp, max_nodes=max_nodes)
    if backend == "highs":
        return _highs_milp(milp, max_nodes)
    raise ValueError(f"unknown MILP backend {backend!r}")


def _scipy_parts(lp: LinearProgram):
    from scipy.optimize import Bounds, LinearConstraint

    A, b = lp.dense()
    lo = np.full(len(b), -np.inf)
    hi = np.full(len(b), np.inf)
    for i, rel in enumerate(lp.relations):
        if rel in ("<=", "=="):
            hi[i] = b[i]
        if rel in (">=", "=="):
            lo[i] = b[i]
    c = np.asarray(lp.objective, dtype=float)
    if lp.sense == "max":
        c = -c
    cons = [LinearConstraint(A, lo, hi)] if len(b) else []
    return c, cons, Bounds(np.asarray(lp.lower), np.asarray(lp.upper))


_HIGHS_STATUS = {0: "optimal", 1: "iteration-limit", 2: "infeasible", 3: "unbounded"}


def _highs_lp(lp: LinearProgram) -> SolveOutcome:
    from scipy.optimize import linprog

    A, b = lp.dense()
    ub = [i for i, r in enumerate(lp.relations) if r == "<="]
    lb = [i for i, r in enumerate(lp.relations) if r == ">="]
    eq = [i for i, r in enumerate(lp.relations) if r == "=="]
    A_ub = np.vstack([A[ub], -A[lb]]) if ub or lb else None
    b_ub = np.concatenate([b[ub], -b[lb]]) if ub or lb else None
    c = np.asarray(lp.objective, dtype=float)
    if lp.sense == "max":
        c = -c
    bounds = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None)
              for lo, hi in zip(lp.lower, lp.upper)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A[eq] if eq else None, b_eq=b[eq] if eq else None,
                  bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    status = _HIGHS_STATUS.get(res.status, "infeasible")
    if status != "optimal":
        return SolveOutcome(status, backend="highs")
    return SolveOutcome("optimal", x=res.x, objective=lp.value(res.x), backend="highs")


def _highs_milp(m: MixedIntegerLinearProgram, max_nodes: int) -> SolveOutcome:
    from scipy.optimize import milp

    c, cons, bounds = _scipy_parts(m.lp)
    integrality = np.zeros(m.lp.n_vars)
    integrality[sorted(m.binaries)] = 1
    with warnings.catch_warnings():
        # scipy forwards options it does not know to HiGHS and warns about it
        warnings.filterwarnings("ignore", message="Unrecognized options", category=RuntimeWarning)
        res = milp(c, constraints=cons, bounds=bounds, integrality=integrality,
                   options={"node_limit": max_nodes, "mip_rel_gap": 0.0,
                            "mip_feasibility_tolerance": 1e-9})
    status = _HIGHS_STATUS.get(res.status, "infeasible")
    if res.status == 1:
        status = "node-limit"
    if res.x is None:
        return SolveOutcome(status, backend="highs")
    x = np.asarray(res.x, dtype=float).copy()
    bins = sorted(m.binaries)
    x[bins] = np.round(x[bins])
    return SolveOutcome(status, x=x, objective=m.lp.value(x), backend="highs")
