"""Infinite-horizon invariance: G*_inf by value iteration or MILP, RCISs, and PCIS algorithms."""

from __future__ import annotations

import logging
import warnings
from typing import Hashable, Iterable

import numpy as np

from .finite_horizon import shrink_loop
from .model import DiscreteModel, Restriction, _restrict_indices, restrict
from .results import THRESHOLD_SLACK, GTable, PcisResult, StationaryPolicy, segment_best
from .solver import LinearProgram, MixedIntegerLinearProgram, solve_milp

log = logging.getLogger(__name__)

RCIS_TOL = 1e-12
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1_000_000
MILP_BINARY_LIMIT = 400


class SeedNotInvariantError(ValueError):
    pass


def _vi(R: Restriction, tol: float, max_iter: int) -> tuple[np.ndarray, int, float, bool, bool]:
    G = np.ones(R.size)
    monotone = True
    residual = np.inf
    for it in range(1, max_iter + 1):
        best, _ = segment_best(R.kernel @ G, R.row_start)
        G_new = np.clip(best, 0.0, 1.0)
        if np.any(G_new > G + 1e-15):
            monotone = False
        residual = float(np.max(np.abs(G_new - G), initial=0.0))
        G = G_new
        if residual < tol:
            return G, it, residual, True, monotone
    return G, max_iter, residual, False, monotone


def greedy_policy(R: Restriction, G: np.ndarray) -> StationaryPolicy:
    _, arg = segment_best(R.kernel @ G, R.row_start, tie_tol=1e-9)
    return StationaryPolicy(R.states, arg, R.model.actions_of)


def value_iteration_ginf(model: DiscreteModel, Q: Iterable[Hashable], tol: float = DEFAULT_TOL,
                         max_iter: int = DEFAULT_MAX_ITER) -> GTable:
    """Iterate G_{k+1} = max_u T_u G_k from G_0 = 1 until the sup-norm step is below ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    R = restrict(model, Q)
    G, it, res, ok, mono = _vi(R, tol, max_iter)
    if not ok:
        log.warning("value iteration unconverged after %d sweeps (residual %.3g)", it, res)
    return GTable(R.states, G, iterations=it, residual=res, converged=ok, monotone=mono, method="vi")


def build_infinite_milp(model: DiscreteModel, Q: Iterable[Hashable], big_m: float = 2.0) -> MixedIntegerLinearProgram:
    """MILP whose optimal g is the maximal fixed point G*_inf on ``Q``."""
    if not big_m > 1.0:
        raise ValueError("big-M constant must exceed 1")
    return _infinite_milp(restrict(model, Q), big_m)[0]


def _infinite_milp(R: Restriction, big_m: float):
    milp = MixedIntegerLinearProgram(LinearProgram(sense="max"))
    g = [milp.lp.add_variable(("g", x), 0.0, 1.0, 1.0) for x in R.states]
    kappa: list[list[int]] = []
    for i, x in enumerate(R.states):
        kappa.append([milp.add_binary(("kappa", x, u)) for u in R.actions(i)])
    K = R.kernel
    for i in range(R.size):
        for a, r in enumerate(range(R.row_start[i], R.row_start[i + 1])):
            coeffs = {g[i]: 1.0}
            for j, p in zip(K.indices[K.indptr[r]:K.indptr[r + 1]], K.data[K.indptr[r]:K.indptr[r + 1]]):
                coeffs[g[j]] = coeffs.get(g[j], 0.0) - p
            milp.lp.add_constraint(coeffs, ">=", 0.0)
            upper = dict(coeffs)
            upper[kappa[i][a]] = big_m
            milp.lp.add_constraint(upper, "<=", big_m)
        milp.lp.add_constraint({k: 1.0 for k in kappa[i]}, ">=", 1.0)
    return milp, g, kappa


def _milp_values(R: Restriction, big_m: float, backend: str) -> tuple[np.ndarray, np.ndarray, object]:
    milp, g, kappa = _infinite_milp(R, big_m)
    out = solve_milp(milp, backend=backend)
    if not out.optimal:
        raise RuntimeError(f"infinite-horizon MILP not solved: {out.status}")
    G = np.clip(out.x[g], 0.0, 1.0)
    choice = np.array([next(a for a, k in enumerate(ks) if out.x[k] > 0.5) for ks in kappa], dtype=np.int64)
    return G, choice, out


def solve_ginf_exact(model: DiscreteModel, Q: Iterable[Hashable], big_m: float = 2.0,
                     backend: str = "auto") -> tuple[GTable, StationaryPolicy]:
    """G*_inf from the MILP optimum; the policy takes the lowest-index action with kappa = 1."""
    R = restrict(model, Q)
    G, choice, out = _milp_values(R, big_m, backend)
    table = GTable(R.states, G, iterations=out.nodes, residual=0.0, method="milp")
    return table, StationaryPolicy(R.states, choice, model.actions_of)


def _rcis_indices(model: DiscreteModel, idx: np.ndarray) -> np.ndarray:
    while idx.size:
        R = _restrict_indices(model, idx)
        best, _ = segment_best(R.row_sums(), R.row_start)
        keep = best >= 1.0 - RCIS_TOL
        if keep.all():
            break
        idx = idx[keep]
    return idx


def rcis_discrete(model: DiscreteModel, Q: Iterable[Hashable]) -> set:
    """Largest subset R of ``Q`` where every state has an action keeping all mass in R."""
    idx = restrict(model, Q).indices
    return {model.states[i] for i in _rcis_indices(model, idx)}


def _mass_into(model: DiscreteModel, rows_of: np.ndarray, target: np.ndarray) -> np.ndarray:
    """One-step probability of landing in ``target`` for each row of states ``rows_of``."""
    R = _restrict_indices(model, rows_of)
    mask = np.zeros(model.n_states)
    mask[target] = 1.0
    full = model.kernel[np.concatenate([np.arange(model.row_start[i], model.row_start[i + 1]) for i in rows_of])]
    return np.asarray(full @ mask).ravel(), R


def largest_infinite_pcis(model: DiscreteModel, Q: Iterable[Hashable], epsilon: float,
                          method: str | None = None, tol: float = DEFAULT_TOL,
                          max_iter: int = DEFAULT_MAX_ITER, big_m: float = 2.0,
                          backend: str = "auto") -> PcisResult:
    """Largest infinite-horizon epsilon-PCIS inside ``Q`` by iterated shrinking."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    Q = tuple(Q)
    R0 = restrict(model, Q)
    if method is None:
        n_bin = int(R0.row_start[-1])
        method = "milp" if n_bin <= MILP_BINARY_LIMIT else "vi"
        if method == "vi":
            warnings.warn(
                f"{n_bin} binaries exceed {MILP_BINARY_LIMIT}; using value iteration, "
                "so thresholds rely on a converged but inexact G*_inf",
                stacklevel=2,
            )
    diagnostics: list[str] = []
    residuals: list[float] = []

    def evaluate(R):
        if method == "milp":
            G, choice, _ = _milp_values(R, big_m, backend)
            return G, StationaryPolicy(R.states, choice, model.actions_of)
        if method == "vi":
            G, it, res, ok, _ = _vi(R, tol, max_iter)
            if not ok:
                diagnostics.append(f"value iteration unconverged (residual {res:.3g})")
            residuals.append(res)
            # VI iterates approach G*_inf from above; discount the last step
            return G, greedy_policy(R, G), G - res
        raise ValueError(f"unknown method {method!r}; expected 'milp' or 'vi'")

    states, probs, policy, trace, thresholds, converged = shrink_loop(model, Q, evaluate, lambda R: epsilon)
    if not converged:
        diagnostics.append("iteration cap reached before the set stabilised")
    if not states:
        diagnostics.append("empty invariant set")
    return PcisResult(
        states=states, probabilities=probs, policy=policy, trace=trace, epsilon=float(epsilon),
        horizon=None, method=method, thresholds=thresholds, diagnostics=diagnostics,
        converged=converged, candidates=R0.states,
    )


def infinite_pcis_via_rcis(model: DiscreteModel, Q: Iterable[Hashable], epsilon: float) -> PcisResult:
    """States of ``Q`` that reach the largest RCIS in one step with probability >= epsilon."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    R0 = restrict(model, Q)
    seed = _rcis_indices(model, R0.indices)
    if seed.size == 0:
        return PcisResult(
            states=(), probabilities={x: 0.0 for x in R0.states}, policy=None,
            trace=[R0.size, 0], epsilon=float(epsilon), horizon=None, method="rcis-seeded",
            diagnostics=["no RCIS seed"], candidates=R0.states,
        )
    mass, _ = _mass_into(model, R0.indices, seed)
    best, arg = segment_best(mass, R0.row_start)
    in_seed = np.isin(R0.indices, seed)
    # seed states keep an action with all mass inside the seed
    keep = in_seed | (best >= epsilon - THRESHOLD_SLACK)
    idx = R0.indices[keep]
    probs = {x: (1.0 if s else float(min(b, 1.0))) for x, s, b in zip(R0.states, in_seed, best)}
    policy = StationaryPolicy(
        tuple(model.states[i] for i in idx), arg[keep], model.actions_of
    )
    return PcisResult(
        states=tuple(model.states[i] for i in idx), probabilities=probs, policy=policy,
        trace=[R0.size, int(idx.size)], epsilon=float(epsilon), horizon=None,
        method="rcis-seeded", candidates=R0.states,
    )


def check_existence_conditions(model: DiscreteModel, Q: Iterable[Hashable], Q_f: Iterable[Hashable],
                               epsilon: float) -> dict:
    """Evaluate the necessary and the sufficient condition for ``Q`` given an RCIS ``Q_f``."""
    Q = set(Q)
    Q_f = set(Q_f)
    if not Q_f or not Q_f <= Q:
        raise SeedNotInvariantError("seed set not robustly invariant (empty or not inside Q)")
    seed = np.array(sorted(model.index(x) for x in Q_f), dtype=np.int64)
    mass_f, Rf = _mass_into(model, seed, seed)
    best_f, _ = segment_best(mass_f, Rf.row_start)
    if np.any(best_f < 1.0 - RCIS_TOL):
        raise SeedNotInvariantError("seed set not robustly invariant")
    rest = np.array(sorted(model.index(x) for x in Q - Q_f), dtype=np.int64)
    if rest.size == 0:
        return {"necessary_holds": True, "sufficient_holds": True}
    q_idx = np.array(sorted(model.index(x) for x in Q), dtype=np.int64)
    to_q, Rr = _mass_into(model, rest, q_idx)
    to_f, _ = _mass_into(model, rest, seed)
    necessary = segment_best(to_q, Rr.row_start)[0] >= epsilon - THRESHOLD_SLACK
    suff_score = to_f + epsilon * (to_q - to_f)
    sufficient = segment_best(suff_score, Rr.row_start)[0] >= epsilon - THRESHOLD_SLACK
    return {"necessary_holds": bool(necessary.all()), "sufficient_holds": bool(sufficient.all())}
