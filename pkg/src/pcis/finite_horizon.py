"""N-step invariance probabilities, optimal Markov policies and the largest N-step PCIS.

The backward recursion on a working set P is

    V_N(x) = 1,   V_k(x) = max_u sum_{y in P} V_{k+1}(y) T(y|x,u),

and V_0 is the N-step invariance probability. The shrinking loop repeatedly
drops states with V_0 below the threshold and recomputes on what remains.
"""

from __future__ import annotations

import logging
from typing import Callable, Hashable, Iterable

import numpy as np

from .model import DiscreteModel, Restriction, _restrict_indices, restrict
from .results import (
    THRESHOLD_SLACK,
    MarkovPolicy,
    PcisResult,
    ValueTable,
    segment_best,
)
from .solver import INF, LinearProgram, solve_lp

log = logging.getLogger(__name__)

POLICY_TOL = 1e-7


class LPInconsistencyError(RuntimeError):
    """No action reproduces an LP value; signals a solver tolerance failure."""


def _check_horizon(N: int) -> None:
    if int(N) != N or N < 1:
        raise ValueError(f"horizon must be a positive integer, got {N!r}")


def _dp(R: Restriction, N: int) -> tuple[np.ndarray, np.ndarray]:
    m = R.size
    values = np.empty((N + 1, m))
    choice = np.empty((N, m), dtype=np.int64)
    values[N] = 1.0
    for k in range(N - 1, -1, -1):
        q = R.kernel @ values[k + 1]
        best, arg = segment_best(q, R.row_start)
        values[k] = np.clip(best, 0.0, 1.0)
        choice[k] = arg
    return values, choice


def dp_backward(model: DiscreteModel, Q: Iterable[Hashable], N: int) -> tuple[ValueTable, MarkovPolicy]:
    """Backward recursion restricted to ``Q``; ties go to the lowest action index."""
    _check_horizon(N)
    R = restrict(model, Q)
    values, choice = _dp(R, N)
    return ValueTable(R.states, values), MarkovPolicy(R.states, choice, model.actions_of)


def build_finite_lp(model: DiscreteModel, Q: Iterable[Hashable], N: int) -> LinearProgram:
    """LP whose optimum is the value table: min sum v_k(x) over the Bellman inequalities."""
    _check_horizon(N)
    R = restrict(model, Q)
    return _finite_lp(R, N)


def _finite_lp(R: Restriction, N: int) -> LinearProgram:
    lp = LinearProgram(sense="min")
    m = R.size
    var = np.empty((N + 1, m), dtype=np.int64)
    for k in range(N + 1):
        for i, x in enumerate(R.states):
            var[k, i] = lp.add_variable(("v", k, x), -INF, INF, 1.0)
    K = R.kernel
    for i in range(m):
        for k in range(N):
            for r in range(R.row_start[i], R.row_start[i + 1]):
                coeffs = {int(var[k, i]): 1.0}
                for j, p in zip(K.indices[K.indptr[r]:K.indptr[r + 1]], K.data[K.indptr[r]:K.indptr[r + 1]]):
                    col = int(var[k + 1, j])
                    coeffs[col] = coeffs.get(col, 0.0) - p
                lp.add_constraint(coeffs, ">=", 0.0)
        lp.add_constraint({int(var[N, i]): 1.0}, ">=", 1.0)
    return lp


def extract_policy_from_lp(model: DiscreteModel, Q: Iterable[Hashable], N: int,
                           lp_solution: np.ndarray) -> MarkovPolicy:
    """Pick, per (k, x), the lowest-index action whose one-step value equals v_k(x)."""
    R = restrict(model, Q)
    values = np.asarray(lp_solution, dtype=float).reshape(N + 1, R.size)
    return MarkovPolicy(R.states, _policy_from_values(R, values), model.actions_of)


def _policy_from_values(R: Restriction, values: np.ndarray) -> np.ndarray:
    N = values.shape[0] - 1
    choice = np.empty((N, R.size), dtype=np.int64)
    for k in range(N):
        q = R.kernel @ values[k + 1]
        for i in range(R.size):
            seg = q[R.row_start[i]:R.row_start[i + 1]]
            hits = np.flatnonzero(np.abs(seg - values[k, i]) <= POLICY_TOL)
            if hits.size == 0:
                raise LPInconsistencyError(
                    f"LP/DP inconsistency at k={k}, state {R.states[i]!r}: "
                    f"v={values[k, i]!r}, best one-step value {seg.max()!r}"
                )
            choice[k, i] = hits[0]
    return choice


def _lp_values(R: Restriction, N: int, backend: str) -> tuple[np.ndarray, np.ndarray]:
    out = solve_lp(_finite_lp(R, N), backend=backend)
    if not out.optimal:
        raise RuntimeError(f"finite-horizon LP not solved: {out.status}")
    values = out.x.reshape(N + 1, R.size)
    return values, _policy_from_values(R, values)


def solve_finite(model: DiscreteModel, Q: Iterable[Hashable], N: int, method: str = "dp",
                 lp_backend: str = "auto") -> tuple[ValueTable, MarkovPolicy]:
    """Value table and policy on ``Q`` via the recursion (``dp``) or the LP (``lp``)."""
    _check_horizon(N)
    R = restrict(model, Q)
    values, choice = _evaluate(R, N, method, lp_backend)
    return ValueTable(R.states, values), MarkovPolicy(R.states, choice, model.actions_of)


def _evaluate(R: Restriction, N: int, method: str, lp_backend: str):
    if method == "dp":
        return _dp(R, N)
    if method == "lp":
        return _lp_values(R, N, lp_backend)
    raise ValueError(f"unknown method {method!r}; expected 'dp' or 'lp'")


def backward_reachable_set(values: ValueTable, epsilon: float) -> set:
    """States whose 0-step value meets ``epsilon`` (with 1e-12 slack)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    return {x for x, v in zip(values.states, values.values[0]) if v >= epsilon - THRESHOLD_SLACK}


def shrink_loop(
    model: DiscreteModel,
    Q: Iterable[Hashable],
    evaluate: Callable[[Restriction], tuple],
    threshold: Callable[[Restriction], float],
) -> tuple[tuple, dict, object, list, list, bool]:
    """Generic P_{i+1} = {x in P_i : value_i(x) >= threshold_i} iteration.

    ``evaluate`` returns ``(values, policy)`` or ``(values, policy, score)``;
    when a score is given it replaces the values in the threshold test.

    Returns final states, per-state last values, the final policy, the size
    trace, the per-round thresholds and whether the loop converged before the
    |Q| round cap.
    """
    idx = np.array(sorted(model.index(x) for x in set(Q)), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("candidate set is empty")
    cap = idx.size
    trace = [int(idx.size)]
    thresholds: list[float] = []
    probs: dict = {}
    policy = None
    converged = False
    for _ in range(cap):
        R = _restrict_indices(model, idx)
        v0, policy, *score = evaluate(R)
        level = threshold(R)
        thresholds.append(level)
        probs.update(zip(R.states, map(float, v0)))
        keep = (score[0] if score else v0) >= level - THRESHOLD_SLACK
        trace.append(int(keep.sum()))
        log.info("round %d: |P|=%d threshold=%.6g kept=%d", len(thresholds), idx.size, level, keep.sum())
        if keep.all():
            converged = True
            break
        idx = idx[keep]
        if idx.size == 0:
            policy = None
            converged = True
            break
    states = tuple(model.states[i] for i in idx)
    return states, probs, policy, trace, thresholds, converged


def largest_finite_pcis(model: DiscreteModel, Q: Iterable[Hashable], N: int, epsilon: float,
                        method: str = "dp", lp_backend: str = "auto") -> PcisResult:
    """Largest N-step epsilon-PCIS inside ``Q`` (possibly empty)."""
    _check_horizon(N)
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    Q = tuple(Q)

    def evaluate(R):
        values, choice = _evaluate(R, N, method, lp_backend)
        return values[0], MarkovPolicy(R.states, choice, model.actions_of)

    states, probs, policy, trace, thresholds, converged = shrink_loop(
        model, Q, evaluate, lambda R: epsilon
    )
    diagnostics = []
    if not converged:
        diagnostics.append(f"iteration cap {len(set(Q))} reached before the set stabilised")
    if not states:
        diagnostics.append("empty invariant set")
    return PcisResult(
        states=states, probabilities=probs, policy=policy, trace=trace, epsilon=float(epsilon),
        horizon=int(N), method=method, thresholds=thresholds, diagnostics=diagnostics,
        converged=converged, candidates=tuple(x for x in model.states if x in set(Q)),
    )
