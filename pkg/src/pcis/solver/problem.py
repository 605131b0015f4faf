"""Problem containers shared by the LP and MILP solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np

INF = math.inf
RELATIONS = ("<=", ">=", "==")


class ProblemError(ValueError):
    pass


@dataclass
class LinearProgram:
    """Sparse-row linear program ``min|max c.x  s.t.  rows, lower <= x <= upper``."""

    sense: str = "min"
    names: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    relations: list = field(default_factory=list)
    rhs: list = field(default_factory=list)

    def add_variable(self, name: Hashable = None, lower: float = 0.0, upper: float = INF, cost: float = 0.0) -> int:
        self.names.append(name if name is not None else f"x{len(self.names)}")
        self.objective.append(float(cost))
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        return len(self.names) - 1

    def add_constraint(self, coeffs: Mapping[int, float], relation: str, rhs: float) -> int:
        if relation not in RELATIONS:
            raise ProblemError(f"unknown relation {relation!r}")
        self.rows.append({int(j): float(a) for j, a in coeffs.items() if a != 0.0})
        self.relations.append(relation)
        self.rhs.append(float(rhs))
        return len(self.rows) - 1

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_constraints(self) -> int:
        return len(self.rows)

    def check(self) -> None:
        if self.sense not in ("min", "max"):
            raise ProblemError(f"objective sense must be min or max, got {self.sense!r}")
        n = self.n_vars
        if not (len(self.objective) == len(self.lower) == len(self.upper) == n):
            raise ProblemError("variable arrays have inconsistent lengths")
        for j, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if lo > hi:
                raise ProblemError(f"variable {self.names[j]!r}: lower {lo} > upper {hi}")
        for i, row in enumerate(self.rows):
            for j in row:
                if not 0 <= j < n:
                    raise ProblemError(f"constraint {i} references undeclared variable {j}")

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Constraint matrix and right-hand side as dense arrays."""
        A = np.zeros((self.n_constraints, self.n_vars))
        for i, row in enumerate(self.rows):
            for j, a in row.items():
                A[i, j] += a
        return A, np.asarray(self.rhs, dtype=float)

    def max_violation(self, x: np.ndarray) -> float:
        worst = 0.0
        for j, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            worst = max(worst, lo - x[j], x[j] - hi)
        for row, rel, b in zip(self.rows, self.relations, self.rhs):
            lhs = sum(a * x[j] for j, a in row.items())
            if rel == "<=":
                worst = max(worst, lhs - b)
            elif rel == ">=":
                worst = max(worst, b - lhs)
            else:
                worst = max(worst, abs(lhs - b))
        return worst

    def value(self, x: np.ndarray) -> float:
        return float(np.dot(self.objective, x))


@dataclass
class MixedIntegerLinearProgram:
    """A linear program in which some variables are restricted to {0, 1}."""

    lp: LinearProgram
    binaries: set = field(default_factory=set)

    def add_binary(self, name: Hashable = None, cost: float = 0.0) -> int:
        j = self.lp.add_variable(name, 0.0, 1.0, cost)
        self.binaries.add(j)
        return j

    def check(self) -> None:
        self.lp.check()
        for j in self.binaries:
            if not (self.lp.lower[j] >= 0.0 and self.lp.upper[j] <= 1.0):
                raise ProblemError(f"binary variable {self.lp.names[j]!r} must have bounds within [0, 1]")


@dataclass
class SolveOutcome:
    """Result of an LP or MILP solve.

    ``status`` is one of ``optimal``, ``infeasible``, ``unbounded``,
    ``iteration-limit`` or ``node-limit``. ``x`` and ``objective`` are set on
    ``optimal`` (and carry the incumbent, if any, on ``node-limit``).
    """

    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    nodes: int = 0
    backend: str = "simplex"

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def values(self, lp: LinearProgram) -> dict:
        if self.x is None:
            return {}
        return dict(zip(lp.names, map(float, self.x)))
