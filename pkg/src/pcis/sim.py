"""Monte Carlo rollouts of computed policies.

Every trial draws from its own Philox stream keyed by ``(seed << 64) | trial``,
so results do not depend on how trials are batched or ordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .model import DiscreteModel, Region
from .results import MarkovPolicy, StationaryPolicy

RNG_NAME = "Philox"
Z99 = 2.576
CHUNK = 4096


class PolicyCoverageError(ValueError):
    pass


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Generator for one trial: Philox-4x64 with 128-bit key (seed, trial)."""
    if seed < 0 or trial < 0:
        raise ValueError("seed and trial index must be nonnegative")
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(trial)))


def ci_halfwidth(p_hat: float, trials: int) -> float:
    return Z99 * math.sqrt(p_hat * (1.0 - p_hat) / trials)


@dataclass(frozen=True)
class SimRow:
    state: str
    computed_p: float
    empirical_p: float
    ci_halfwidth: float
    verdict: str


@dataclass(frozen=True)
class SimReport:
    """Empirical stay frequencies per initial state.

    ``mode`` is ``two-sided`` (|empirical - computed| within the half-width
    plus ``slack``) or ``lower-bound`` (empirical at least computed minus the
    same margin; used when a step cap truncates an infinite horizon).
    """

    trials: int
    seed: int
    steps: int
    mode: str
    rows: tuple[SimRow, ...]
    slack: float = 0.0
    rng: str = RNG_NAME
    notes: tuple = field(default=())

    @property
    def passed(self) -> bool:
        return all(r.verdict != "fail" for r in self.rows)

    def row(self, state) -> SimRow:
        for r in self.rows:
            if r.state == str(state):
                return r
        raise KeyError(state)

    def metadata(self) -> dict:
        return {"trials": self.trials, "seed": self.seed, "rng": self.rng, "steps": self.steps,
                "mode": self.mode, "slack": self.slack, "passed": self.passed, "notes": list(self.notes)}


def _verdict(emp: float, comp: float | None, hw: float, slack: float, mode: str) -> str:
    if comp is None or not math.isfinite(comp):
        return "n/a"
    margin = hw + slack + 1e-9
    ok = emp >= comp - margin if mode == "lower-bound" else abs(emp - comp) <= margin
    return "pass" if ok else "fail"


def _report(starts, freqs, computed, trials, seed, steps, mode, slack, notes=()) -> SimReport:
    rows = []
    for x, f in zip(starts, freqs):
        comp = None if computed is None else computed.get(x)
        hw = ci_halfwidth(f, trials)
        rows.append(SimRow(str(x), float("nan") if comp is None else float(comp), float(f), hw,
                           _verdict(f, comp, hw, slack, mode)))
    return SimReport(trials, int(seed), int(steps), mode, tuple(rows), float(slack), notes=tuple(notes))


def _policy_rows(model: DiscreteModel, policy, steps: int, in_q: np.ndarray) -> np.ndarray:
    """Kernel row per (step, state); -1 where the policy is undefined or the state is outside Q."""
    rows = np.full((steps, model.n_states), -1, dtype=np.int64)
    if isinstance(policy, MarkovPolicy):
        if policy.horizon < steps:
            raise ValueError(f"policy covers {policy.horizon} steps, {steps} requested")
        choice_at = lambda k: policy.choice[k]  # noqa: E731
    elif isinstance(policy, StationaryPolicy):
        choice_at = lambda k: policy.choice  # noqa: E731
    else:
        raise TypeError("policy must be a MarkovPolicy or StationaryPolicy")
    pos = np.array([model.index(x) for x in policy.states], dtype=np.int64)
    for k in range(steps):
        rows[k, pos] = model.row_start[pos] + np.asarray(choice_at(k), dtype=np.int64)
    rows[:, ~in_q] = -1
    return rows


def _is_state(model: DiscreteModel, x) -> bool:
    try:
        return x in model._index
    except TypeError:
        return False


def simulate_discrete(model: DiscreteModel, policy: MarkovPolicy | StationaryPolicy,
                      Q: Iterable[Hashable], x0: Hashable | Sequence[Hashable], N: int | None,
                      trials: int, seed: int = 0, computed: dict | None = None) -> SimReport:
    """Fraction of trials whose states x_0..x_N all stay in ``Q``.

    ``N=None`` is the infinite-horizon check: trajectories are capped at
    10*|Q| steps, so the frequency overestimates the true probability and the
    verdict only tests the lower bound.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    Q = set(Q)
    starts = [x0] if _is_state(model, x0) else list(x0)
    for x in starts:
        if x not in Q:
            raise ValueError(f"initial state {x!r} is not in Q")
    steps = 10 * len(Q) if N is None else int(N)
    mode = "lower-bound" if N is None else "two-sided"
    in_q = np.zeros(model.n_states, dtype=bool)
    in_q[[model.index(x) for x in Q]] = True
    rows = _policy_rows(model, policy, steps, in_q)
    K = model.kernel
    cum = K.data.copy()
    for r in range(K.shape[0]):
        a, b = K.indptr[r], K.indptr[r + 1]
        np.cumsum(cum[a:b], out=cum[a:b])
        if b > a:
            cum[b - 1] = np.inf  # absorb rounding in the last entry

    freqs = []
    for x in starts:
        stay = 0
        for lo in range(0, trials, CHUNK):
            n = min(CHUNK, trials - lo)
            draws = np.stack([trial_rng(seed, t).random(steps) for t in range(lo, lo + n)]) if steps else np.zeros((n, 0))
            cur = np.full(n, model.index(x), dtype=np.int64)
            alive = np.ones(n, dtype=bool)
            for k in range(steps):
                live = np.flatnonzero(alive)
                if live.size == 0:
                    break
                r = rows[k, cur[live]]
                if np.any(r < 0):
                    bad = model.states[cur[live][np.argmax(r < 0)]]
                    raise PolicyCoverageError(f"policy undefined at visited state {bad!r} (step {k})")
                u = draws[live, k]
                nxt = np.empty(live.size, dtype=np.int64)
                for rr in np.unique(r):
                    sel = r == rr
                    a, b = K.indptr[rr], K.indptr[rr + 1]
                    pick = np.searchsorted(cum[a:b], u[sel], side="right")
                    nxt[sel] = K.indices[a:b][np.minimum(pick, b - a - 1)]
                cur[live] = nxt
                alive[live] = in_q[nxt]
            stay += int(alive.sum())
        freqs.append(stay / trials)
    notes = ["step cap used; frequency is an upper estimate of the infinite-horizon probability"] if N is None else []
    return _report(starts, freqs, computed, trials, seed, steps, mode, 0.0, notes)


def simulate_continuous(cont, abstraction, policy: MarkovPolicy | StationaryPolicy, Q: Region | None,
                        x0: Sequence[float] | Sequence[Sequence[float]], N: int, trials: int,
                        seed: int = 0, computed: dict | None = None, slack: float = 0.0) -> SimReport:
    """Roll the continuous dynamics under the policy of the cell holding the state.

    Leaving ``Q`` ends the trial as a violation. Landing in a cell of ``Q``
    outside the policy's domain is an error. With ``Q=None`` the stay region
    is the union of the policy's cells. ``computed`` maps the textual initial
    state to the predicted probability.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    pts = np.atleast_2d(np.asarray(x0, dtype=float))
    if pts.shape[1] != cont.state_dim:
        raise ValueError("initial state dimension differs from the model")
    grid = abstraction.state_grid
    reps = abstraction.control_grid.representatives
    where = {x: i for i, x in enumerate(policy.states)}
    actions_of = policy.actions_of
    markov = isinstance(policy, MarkovPolicy)

    def inside(x: np.ndarray) -> bool:
        if Q is None:
            return f"q{grid.locate(x)}" in where
        return Q.contains(x)

    def control(k: int, cell: int) -> np.ndarray:
        name = f"q{cell}"
        if name not in where:
            raise PolicyCoverageError(f"policy undefined at cell {name} (step {k})")
        i = where[name]
        a = int(policy.choice[k, i] if markov else policy.choice[i])
        return reps[int(str(actions_of[name][a])[1:])]

    starts, freqs = [], []
    for p in pts:
        label = ",".join(f"{v:g}" for v in p)
        if not inside(p):
            raise ValueError(f"initial state {label} is not in Q")
        starts.append(label)
        stay = 0
        for t in range(trials):
            rng = trial_rng(seed, t)
            x = p.copy()
            ok = True
            for k in range(N):
                cell = grid.locate(x)
                if cell < 0:
                    ok = False
                    break
                x = cont.sample(x, control(k, cell), rng)
                if not inside(x):
                    ok = False
                    break
            stay += ok
        freqs.append(stay / trials)
    return _report(starts, freqs, computed, trials, seed, N, "two-sided", slack)
