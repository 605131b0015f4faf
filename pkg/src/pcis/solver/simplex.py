"""Dense two-phase tableau simplex; Bland's rule guards against cycling."""

from __future__ import annotations

import math

import numpy as np

from .problem import LinearProgram, SolveOutcome

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
MAX_PIVOTS = 1_000_000


class _StandardForm:
    """``min c.z  s.t.  M z (rel) b,  z >= 0`` with a map back to the original x.

    x = offset + T z, where each original variable uses one or two columns of z.
    """

    def __init__(self, lp: LinearProgram, lower=None, upper=None):
        lower = lp.lower if lower is None else lower
        upper = lp.upper if upper is None else upper
        A, b = lp.dense()
        sign = -1.0 if lp.sense == "max" else 1.0
        c = sign * np.asarray(lp.objective, dtype=float)
        n = lp.n_vars
        cols: list[np.ndarray] = []
        costs: list[float] = []
        self.columns: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        self.offset = np.zeros(n)
        extra_rows: list[tuple[int, float]] = []  # (z column, upper bound) rows z <= ub
        for j in range(n):
            lo, hi = lower[j], upper[j]
            a = A[:, j]
            if math.isfinite(lo):
                self.offset[j] = lo
                self._add(cols, costs, j, a, c[j], +1.0)
                if math.isfinite(hi):
                    extra_rows.append((len(cols) - 1, hi - lo))
            elif math.isfinite(hi):
                self.offset[j] = hi
                self._add(cols, costs, j, a, c[j], -1.0)
            else:
                self._add(cols, costs, j, a, c[j], +1.0)
                self._add(cols, costs, j, a, c[j], -1.0)
        nz = len(cols)
        M = np.column_stack(cols) if cols else np.zeros((A.shape[0], 0))
        b = b - A @ self.offset if n else b.copy()
        rels = list(lp.relations)
        if extra_rows:
            E = np.zeros((len(extra_rows), nz))
            for r, (k, ub) in enumerate(extra_rows):
                E[r, k] = 1.0
            M = np.vstack([M, E])
            b = np.concatenate([b, [ub for _, ub in extra_rows]])
            rels += ["<="] * len(extra_rows)
        self.M, self.b, self.rels = M, b, rels
        self.c = np.asarray(costs, dtype=float)
        self.nz = nz
        self.obj_sign = sign

    def _add(self, cols, costs, j, a, cj, s):
        self.columns[j].append((len(cols), s))
        cols.append(s * a)
        costs.append(s * cj)

    def recover(self, z: np.ndarray) -> np.ndarray:
        x = self.offset.copy()
        for j, parts in enumerate(self.columns):
            for k, s in parts:
                x[j] += s * z[k]
        return x


# Consecutive degenerate pivots tolerated before switching to Bland's rule.
DEGENERATE_SWITCH = 50
# Tied leaving rows must carry a pivot at least this fraction of the largest tied pivot.
TIE_PIVOT_RATIO = 1e-3


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    rows = np.flatnonzero(col)
    if rows.size:
        T[rows] -= np.outer(col[rows], T[r])
    T[:, c] = 0.0
    T[r, c] = 1.0


# Pivots between rebuilds of the tableau from the original data.
REFACTOR_EVERY = 50


def _refactor(T: np.ndarray, basis: list[int], base: np.ndarray, cost: np.ndarray) -> None:
    """Recompute ``T`` as B^-1 [A | b] with matching reduced costs, shedding drift."""
    m = len(basis)
    B = base[:, basis]
    try:
        body = np.linalg.solve(B, base)
    except np.linalg.LinAlgError:
        return
    if not np.all(np.isfinite(body)):
        return
    body[:, basis] = np.eye(m)
    T[:m] = body
    T[m] = cost - cost[basis] @ body


def _run(T: np.ndarray, basis: list[int], allowed: np.ndarray, budget: int,
         base: np.ndarray | None = None, cost: np.ndarray | None = None) -> tuple[str, int]:
    """Simplex pivots on ``T`` (last row = reduced costs, last col = rhs).

    Entering columns follow the most negative reduced cost until a run of
    degenerate pivots, then Bland's lowest-index rule, which cannot cycle.
    Ratio ties go to the lowest-indexed basic variable among rows with a
    well-sized pivot element.
    """
    m = T.shape[0] - 1
    pivots = 0
    degenerate = 0
    retried = False
    while True:
        reduced = T[m, :-1]
        candidates = np.flatnonzero((reduced < -OPT_TOL) & allowed)
        if candidates.size == 0:
            return "optimal", pivots
        if pivots >= budget:
            return "iteration-limit", pivots
        if base is not None and pivots and pivots % REFACTOR_EVERY == 0:
            _refactor(T, basis, base, cost)
            reduced = T[m, :-1]
            candidates = np.flatnonzero((reduced < -OPT_TOL) & allowed)
            if candidates.size == 0:
                return "optimal", pivots
        if degenerate < DEGENERATE_SWITCH:
            c = int(candidates[np.argmin(reduced[candidates])])
        else:
            c = int(candidates[0])
        column = T[:m, c]
        pos = np.flatnonzero(column > PIVOT_TOL)
        if pos.size == 0:
            if base is not None and not retried:
                # confirm on a freshly rebuilt tableau before giving up
                _refactor(T, basis, base, cost)
                retried = True
                continue
            return "unbounded", pivots
        retried = False
        # round-off can leave rhs entries at -1e-15; treat them as zero
        ratios = np.maximum(T[pos, -1], 0.0) / column[pos]
        best = ratios.min()
        ties = pos[ratios <= best + FEAS_TOL * max(1.0, abs(best))]
        ties = ties[column[ties] >= TIE_PIVOT_RATIO * column[ties].max()]
        r = int(min(ties, key=lambda i: basis[i]))
        degenerate = degenerate + 1 if best <= FEAS_TOL else 0
        _pivot(T, r, c)
        basis[r] = c
        pivots += 1


def solve_standard(lp: LinearProgram, lower=None, upper=None, max_pivots: int = MAX_PIVOTS) -> SolveOutcome:
    sf = _StandardForm(lp, lower, upper)
    M, b, rels = sf.M.copy(), sf.b.copy(), list(sf.rels)
    m, nz = M.shape
    for i in range(m):
        if b[i] < 0:
            M[i] *= -1.0
            b[i] *= -1.0
            rels[i] = {"<=": ">=", ">=": "<=", "==": "=="}[rels[i]]
    n_slack = sum(1 for r in rels if r != "==")
    n_art = sum(1 for r in rels if r != "<=")
    ncols = nz + n_slack + n_art
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :nz] = M
    T[:m, -1] = b
    basis = [-1] * m
    s = nz
    a = nz + n_slack
    art_cols = []
    for i, rel in enumerate(rels):
        if rel == "<=":
            T[i, s] = 1.0
            basis[i] = s
            s += 1
        elif rel == ">=":
            T[i, s] = -1.0
            s += 1
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1
        else:
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1
    is_art = np.zeros(ncols, dtype=bool)
    is_art[art_cols] = True
    pivots = 0

    if art_cols:
        # phase 1: minimize the sum of artificials
        T[m, :] = 0.0
        T[m, art_cols] = 1.0
        for i in range(m):
            if is_art[basis[i]]:
                T[m] -= T[i]
        base = T[:m].copy()
        cost1 = np.zeros(ncols + 1)
        cost1[art_cols] = 1.0
        status, k = _run(T, basis, np.ones(ncols, dtype=bool), max_pivots, base, cost1)
        pivots += k
        if status == "iteration-limit":
            return SolveOutcome("iteration-limit", iterations=pivots)
        if -T[m, -1] > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return SolveOutcome("infeasible", iterations=pivots)
        keep = []
        for i in range(m):
            if is_art[basis[i]]:
                row = T[i, :ncols]
                cand = np.flatnonzero((np.abs(row) > 1e-9) & ~is_art)
                if cand.size:
                    _pivot(T, i, int(cand[0]))
                    basis[i] = int(cand[0])
                    keep.append(i)
                # otherwise the row is redundant and dropped
            else:
                keep.append(i)
        if len(keep) < m:
            base = base[keep]
            T = np.vstack([T[keep], T[m:m + 1]])
            basis = [basis[i] for i in keep]
            m = len(keep)

    else:
        base = T[:m].copy()

    # phase 2
    T[m, :] = 0.0
    T[m, :nz] = sf.c
    for i in range(m):
        cb = T[m, basis[i]]
        if cb != 0.0:
            T[m] -= cb * T[i]
    cost2 = np.zeros(ncols + 1)
    cost2[:nz] = sf.c
    status, k = _run(T, basis, ~is_art, max_pivots - pivots, base, cost2)
    pivots += k
    if status != "optimal":
        return SolveOutcome(status, iterations=pivots)

    z = np.zeros(ncols)
    z[basis] = T[:m, -1]
    z = _polish(M, b, rels, nz, n_slack, basis, z)
    x = sf.recover(z[:nz])
    return SolveOutcome("optimal", x=x, objective=lp.value(x), iterations=pivots)


def _polish(M, b, rels, nz, n_slack, basis, z):
    """Re-solve the final basis system directly to shed tableau round-off."""
    m = len(rels)
    full = np.zeros((m, nz + n_slack))
    full[:, :nz] = M
    s = nz
    for i, rel in enumerate(rels):
        if rel == "<=":
            full[i, s] = 1.0
            s += 1
        elif rel == ">=":
            full[i, s] = -1.0
            s += 1
    cols = [j for j in basis if j < nz + n_slack]
    if len(cols) != len(basis) or not cols:
        return z
    B = full[:, cols]
    try:
        zb, *_ = np.linalg.lstsq(B, b, rcond=None)
    except np.linalg.LinAlgError:
        return z
    if np.abs(B @ zb - b).max(initial=0.0) > 1e-9 or np.any(zb < -1e-9):
        return z
    out = np.zeros_like(z)
    out[cols] = np.maximum(zb, 0.0)
    return out
