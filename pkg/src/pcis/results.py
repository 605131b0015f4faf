"""Value tables, policies and the invariant-set result record."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np

# Slack applied when comparing a probability against a threshold.
THRESHOLD_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class ValueTable:
    """V*_k on a working set; ``values[k, i]`` belongs to ``states[i]``."""

    states: tuple
    values: np.ndarray

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    def at(self, k: int, x: Hashable) -> float:
        return float(self.values[k, self.states.index(x)])

    def initial(self) -> dict:
        return dict(zip(self.states, map(float, self.values[0])))


@dataclass(frozen=True, eq=False)
class MarkovPolicy:
    """Time-varying policy; ``choice[k, i]`` indexes ``actions_of[states[i]]``."""

    states: tuple
    choice: np.ndarray
    actions_of: Mapping

    @property
    def horizon(self) -> int:
        return self.choice.shape[0]

    def action(self, k: int, x: Hashable) -> Hashable:
        i = self.states.index(x)
        return self.actions_of[x][int(self.choice[k, i])]

    def as_dicts(self) -> list[dict]:
        return [
            {x: self.actions_of[x][int(a)] for x, a in zip(self.states, row)}
            for row in self.choice
        ]


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Time-invariant policy; ``choice[i]`` indexes ``actions_of[states[i]]``."""

    states: tuple
    choice: np.ndarray
    actions_of: Mapping

    def action(self, x: Hashable, k: int | None = None) -> Hashable:
        i = self.states.index(x)
        return self.actions_of[x][int(self.choice[i])]

    def as_dict(self) -> dict:
        return {x: self.actions_of[x][int(a)] for x, a in zip(self.states, self.choice)}


@dataclass(frozen=True, eq=False)
class GTable:
    """Infinite-horizon invariance probabilities G*_inf on a working set."""

    states: tuple
    values: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    monotone: bool = True
    method: str = "vi"

    def __getitem__(self, x: Hashable) -> float:
        return float(self.values[self.states.index(x)])

    def as_dict(self) -> dict:
        return dict(zip(self.states, map(float, self.values)))


@dataclass
class PcisResult:
    """Outcome of an invariant-set computation.

    ``probabilities`` holds, for every state of the initial candidate set, the
    value computed in the last round that still contained it. ``trace`` lists
    the working-set sizes |P_0|, |P_1|, ...; ``iterations`` counts the value
    computations performed.
    """

    states: tuple
    probabilities: dict
    policy: MarkovPolicy | StationaryPolicy | None
    trace: list
    epsilon: float
    horizon: int | None
    method: str
    certified: bool = True
    tau_delta: float = 0.0
    thresholds: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    converged: bool = True
    candidates: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def empty(self) -> bool:
        return not self.states

    @property
    def horizon_label(self) -> str:
        return "inf" if self.horizon is None else str(self.horizon)


def segment_best(q: np.ndarray, row_start: np.ndarray, tie_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment maximum and lowest in-segment index attaining it (within ``tie_tol``).

    Segment ``i`` spans ``q[row_start[i]:row_start[i+1]]``; all segments must be nonempty.
    """
    starts = row_start[:-1]
    if len(starts) == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    best = np.maximum.reduceat(q, starts)
    rep = np.repeat(best, np.diff(row_start))
    pos = np.arange(len(q))
    cand = np.where(q >= rep - tie_tol, pos, len(q))
    first = np.minimum.reduceat(cand, starts)
    return best, first - starts
