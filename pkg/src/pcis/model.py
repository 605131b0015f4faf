"""System representations: finite MDPs, density-based continuous models, box regions.

A :class:`DiscreteModel` stores its kernel as one sparse matrix whose rows are
the admissible (state, action) pairs, grouped by state in state order. All
algorithms work on state *indices* internally and translate back to the
user-facing identifiers at the boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.special import ndtr

ROW_SUM_TOL = 1e-9


class ModelError(ValueError):
    """Raised for malformed model files or invalid model arguments."""


# ---------------------------------------------------------------------------
# Discrete models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Finite Markov controlled process.

    Attributes:
        states: Ordered state identifiers.
        actions_of: State -> ordered tuple of admissible actions.
        kernel: CSR matrix, one row per admissible (state, action) pair in
            state-major order, one column per state.
    """

    states: tuple
    actions_of: Mapping[Hashable, tuple]
    kernel: sparse.csr_matrix
    row_start: np.ndarray = field(init=False, repr=False)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self) -> None:
        counts = [len(self.actions_of.get(x, ())) for x in self.states]
        row_start = np.zeros(len(self.states) + 1, dtype=np.int64)
        np.cumsum(counts, out=row_start[1:])
        object.__setattr__(self, "row_start", row_start)
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(self.states)})
        if self.kernel.shape != (int(row_start[-1]), len(self.states)):
            raise ModelError(
                f"kernel shape {self.kernel.shape} does not match "
                f"{int(row_start[-1])} (state, action) rows x {len(self.states)} states"
            )

    @classmethod
    def from_rows(
        cls,
        states: Sequence[Hashable],
        actions_of: Mapping[Hashable, Sequence[Hashable]],
        rows: Mapping[tuple, Mapping[Hashable, float]],
    ) -> "DiscreteModel":
        """Build a model from ``{(x, u): {y: p}}``. Missing pairs become empty rows."""
        states = tuple(states)
        index = {x: i for i, x in enumerate(states)}
        acts = {x: tuple(actions_of.get(x, ())) for x in states}
        indptr = [0]
        cols: list[int] = []
        vals: list[float] = []
        for x in states:
            for u in acts[x]:
                for y, p in rows.get((x, u), {}).items():
                    if y not in index:
                        raise ModelError(f"row ({x!r}, {u!r}) references unknown state {y!r}")
                    if p != 0.0:
                        cols.append(index[y])
                        vals.append(float(p))
                indptr.append(len(cols))
        kernel = sparse.csr_matrix(
            (np.asarray(vals, dtype=float), np.asarray(cols, dtype=np.int64), np.asarray(indptr)),
            shape=(len(indptr) - 1, len(states)),
        )
        kernel.sum_duplicates()
        return cls(states, acts, kernel)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, x: Hashable) -> int:
        try:
            return self._index[x]
        except KeyError:
            raise KeyError(f"unknown state {x!r}") from None

    def row_index(self, x: Hashable, u: Hashable) -> int:
        i = self.index(x)
        try:
            a = self.actions_of[x].index(u)
        except ValueError:
            raise KeyError(f"action {u!r} not admissible in state {x!r}") from None
        return int(self.row_start[i]) + a

    def row(self, x: Hashable, u: Hashable) -> dict:
        """Nonzero entries of T(.|x,u) as ``{y: p}``."""
        r = self.row_index(x, u)
        lo, hi = self.kernel.indptr[r], self.kernel.indptr[r + 1]
        return {
            self.states[j]: float(p)
            for j, p in zip(self.kernel.indices[lo:hi], self.kernel.data[lo:hi])
        }

    def transitions(self) -> Iterable[tuple]:
        """Yield ``(x, u, y, p)`` records for every stored nonzero."""
        for i, x in enumerate(self.states):
            for a, u in enumerate(self.actions_of[x]):
                r = int(self.row_start[i]) + a
                lo, hi = self.kernel.indptr[r], self.kernel.indptr[r + 1]
                for j, p in zip(self.kernel.indices[lo:hi], self.kernel.data[lo:hi]):
                    yield x, u, self.states[j], float(p)


@dataclass(frozen=True, eq=False)
class Restriction:
    """Kernel of a model restricted to a subset of its states.

    Rows follow the subset's state order (which is the model order); columns
    are the subset states. Row sums are at most one; the deficit is the
    probability of leaving the subset in one step.
    """

    model: DiscreteModel
    states: tuple
    indices: np.ndarray
    kernel: sparse.csr_matrix
    row_start: np.ndarray

    @property
    def size(self) -> int:
        return len(self.states)

    def actions(self, k: int) -> tuple:
        return self.model.actions_of[self.states[k]]

    def row(self, x: Hashable, u: Hashable) -> dict:
        k = self.states.index(x)
        a = self.model.actions_of[x].index(u)
        r = int(self.row_start[k]) + a
        lo, hi = self.kernel.indptr[r], self.kernel.indptr[r + 1]
        return {
            self.states[j]: float(p)
            for j, p in zip(self.kernel.indices[lo:hi], self.kernel.data[lo:hi])
        }

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.kernel.sum(axis=1)).ravel()


def restrict(model: DiscreteModel, subset: Iterable[Hashable]) -> Restriction:
    """Restrict ``model`` to ``subset``; entries leading outside are dropped."""
    wanted = set(subset)
    if not wanted:
        raise ModelError("empty restriction")
    missing = [x for x in wanted if x not in model._index]
    if missing:
        raise ModelError(f"subset contains unknown states: {missing[:5]!r}")
    idx = np.array(sorted(model.index(x) for x in wanted), dtype=np.int64)
    return _restrict_indices(model, idx)


def _restrict_indices(model: DiscreteModel, idx: np.ndarray) -> Restriction:
    starts, ends = model.row_start[idx], model.row_start[idx + 1]
    counts = ends - starts
    rows = np.concatenate([np.arange(s, e) for s, e in zip(starts, ends)]) if len(idx) else np.zeros(0, int)
    row_start = np.zeros(len(idx) + 1, dtype=np.int64)
    np.cumsum(counts, out=row_start[1:])
    sub = model.kernel[rows][:, idx].tocsr()
    sub.sort_indices()
    states = tuple(model.states[i] for i in idx)
    return Restriction(model, states, idx, sub, row_start)


def validate(model: DiscreteModel) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""
    problems: list[str] = []
    if len(set(model.states)) != len(model.states):
        problems.append("duplicate state identifiers")
    for x in model.states:
        acts = model.actions_of.get(x, ())
        if not acts:
            problems.append(f"state {x!r}: no admissible action")
        elif len(set(acts)) != len(acts):
            problems.append(f"state {x!r}: duplicate action identifiers")
    K = model.kernel
    sums = np.asarray(K.sum(axis=1)).ravel()
    for i, x in enumerate(model.states):
        for a, u in enumerate(model.actions_of.get(x, ())):
            r = int(model.row_start[i]) + a
            data = K.data[K.indptr[r]:K.indptr[r + 1]]
            if np.any((data < 0.0) | (data > 1.0)) or not np.all(np.isfinite(data)):
                problems.append(f"row ({x!r}, {u!r}): probability outside [0, 1]")
            if abs(sums[r] - 1.0) > ROW_SUM_TOL:
                problems.append(f"row ({x!r}, {u!r}): row-sum {sums[r]:.12g} != 1")
    return problems


# ---------------------------------------------------------------------------
# Continuous models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ModelError("box bounds must be nonempty and of equal dimension")
        if any(not (hi > lo) for lo, hi in zip(self.lower, self.upper)):
            raise ModelError(f"box {self.lower}..{self.upper} has a non-positive side")
        if not all(map(math.isfinite, self.lower + self.upper)):
            raise ModelError("box bounds must be finite")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, x: Sequence[float]) -> bool:
        return all(lo <= v <= hi for lo, v, hi in zip(self.lower, x, self.upper))

    def distance(self, x: Sequence[float]) -> float:
        """Euclidean distance from ``x`` to the box (0 inside)."""
        x = np.asarray(x, dtype=float)
        gap = np.maximum(np.asarray(self.lower) - x, 0.0) + np.maximum(x - np.asarray(self.upper), 0.0)
        return float(np.linalg.norm(gap))


def _open_overlap(a: Box, b: Box) -> bool:
    return all(max(al, bl) < min(ah, bh) for al, ah, bl, bh in zip(a.lower, a.upper, b.lower, b.upper))


@dataclass(frozen=True)
class Region:
    """Union of non-overlapping axis-aligned boxes."""

    boxes: tuple[Box, ...]

    def __post_init__(self) -> None:
        if not self.boxes:
            raise ModelError("region needs at least one box")
        if len({b.dim for b in self.boxes}) != 1:
            raise ModelError("region boxes differ in dimension")
        for i, a in enumerate(self.boxes):
            for b in self.boxes[i + 1:]:
                if _open_overlap(a, b):
                    raise ModelError(f"overlapping boxes {a} and {b}")

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Region":
        return cls((Box(tuple(map(float, lower)), tuple(map(float, upper))),))

    @property
    def dim(self) -> int:
        return self.boxes[0].dim

    @property
    def volume(self) -> float:
        return sum(b.volume for b in self.boxes)

    def contains(self, x: Sequence[float]) -> bool:
        return any(b.contains(x) for b in self.boxes)


DensityFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
SamplerFn = Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]


@dataclass(frozen=True, eq=False)
class ContinuousModel:
    """Markov controlled process on R^n with a transition density.

    ``density(ys, x, u)`` evaluates t(y|x,u) for every row of ``ys`` (shape
    ``(m, state_dim)``). ``sampler(x, u, rng)`` draws one successor state.
    ``admissible_controls_of`` maps a state to a sub-box of ``control_box``;
    ``None`` means the full box everywhere.
    """

    state_dim: int
    control_dim: int
    density: DensityFn
    lipschitz_L: float
    control_box: Box
    sampler: SamplerFn | None = None
    admissible_controls_of: Callable[[np.ndarray], Box] | None = None
    description: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.state_dim < 1 or self.control_dim < 1:
            raise ModelError("state_dim and control_dim must be positive")
        if self.control_box.dim != self.control_dim:
            raise ModelError("control_box dimension differs from control_dim")
        if not (self.lipschitz_L >= 0.0):
            raise ModelError("lipschitz_L must be nonnegative")

    def controls_at(self, x: np.ndarray) -> Box:
        if self.admissible_controls_of is None:
            return self.control_box
        return self.admissible_controls_of(x)

    def sample(self, x: np.ndarray, u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.sampler is None:
            raise ModelError("model has no sampler")
        y = np.asarray(self.sampler(np.asarray(x, float), np.asarray(u, float), rng), dtype=float)
        if y.shape != (self.state_dim,) or not np.all(np.isfinite(y)):
            raise ModelError(f"sampler returned invalid state {y!r}")
        return y


@dataclass(frozen=True)
class LinearGaussianDynamics:
    """x' = A x + B u + c + w with independent per-axis (truncated) Gaussian noise.

    ``truncation`` is the per-axis half-width of the noise support when
    ``kind == "truncated_gaussian"``.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    sigma: float
    kind: str = "gaussian"
    truncation: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "truncated_gaussian"):
            raise ModelError(f"unknown noise kind {self.kind!r}")
        if self.sigma <= 0:
            raise ModelError("noise sigma must be positive")
        if self.kind == "truncated_gaussian" and not (self.truncation and self.truncation > 0):
            raise ModelError("truncated_gaussian noise needs a positive truncation")

    def mean(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B @ u + self.c

    def density(self, ys: np.ndarray, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(ys) - self.mean(x, u)
        s = self.sigma
        logp = -0.5 * np.sum((w / s) ** 2, axis=1) - w.shape[1] * math.log(s * math.sqrt(2 * math.pi))
        p = np.exp(logp)
        if self.kind == "truncated_gaussian":
            t = self.truncation
            z = ndtr(t / s) - ndtr(-t / s)
            p = p / z ** w.shape[1]
            p[np.any(np.abs(w) > t, axis=1)] = 0.0
        return p

    def sample(self, x: np.ndarray, u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = self.A.shape[0]
        if self.kind == "gaussian":
            w = rng.normal(0.0, self.sigma, size=n)
        else:
            # rejection per axis; acceptance >= 68% for truncation >= sigma
            w = np.empty(n)
            for i in range(n):
                while True:
                    v = rng.normal(0.0, self.sigma)
                    if abs(v) <= self.truncation:
                        w[i] = v
                        break
        return self.mean(x, u) + w

    def lipschitz(self) -> float:
        """Bound on |t(y|x,u) - t(y|x',u')| / (|x-x'| + |u-u'|).

        The isotropic Gaussian density's gradient norm peaks at radius sigma;
        the chain rule multiplies by the larger of ||A||_2 and ||B||_2.
        Truncation rescales by the per-axis normalizer (jumps at the support
        edge are ignored, as for any truncated density).
        """
        n = self.A.shape[0]
        s = self.sigma
        grad = (2 * math.pi * s * s) ** (-n / 2) * math.exp(-0.5) / s
        if self.kind == "truncated_gaussian":
            t = self.truncation
            grad /= (ndtr(t / s) - ndtr(-t / s)) ** n
        return grad * max(np.linalg.norm(self.A, 2), np.linalg.norm(self.B, 2))

    def to_json(self) -> dict:
        noise: dict[str, Any] = {"kind": self.kind, "sigma": self.sigma}
        if self.truncation is not None:
            noise["truncation"] = self.truncation
        return {"A": self.A.tolist(), "B": self.B.tolist(), "c": self.c.tolist(), "noise": noise}


def linear_gaussian_model(
    A, B, c=None, *, sigma: float, control_box: Box, kind: str = "gaussian",
    truncation: float | None = None, lipschitz_L: float | None = None,
) -> ContinuousModel:
    """Built-in additive-noise linear model with matching density and sampler."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    c = np.zeros(A.shape[0]) if c is None else np.asarray(c, dtype=float).reshape(A.shape[0])
    dyn = LinearGaussianDynamics(A, B, c, float(sigma), kind, truncation)
    L = dyn.lipschitz() if lipschitz_L is None else float(lipschitz_L)
    return ContinuousModel(
        state_dim=A.shape[0],
        control_dim=B.shape[1],
        density=dyn.density,
        lipschitz_L=L,
        control_box=control_box,
        sampler=dyn.sample,
        description={"dynamics": dyn},
    )


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoadedModel:
    """A parsed model file plus the optional working-set fields it carries."""

    model: DiscreteModel | ContinuousModel
    safe_set: tuple | None = None
    region: Region | None = None
    grid: dict | None = None
    name: str | None = None


def _require(doc: Mapping, key: str, where: str = "model"):
    if key not in doc:
        raise ModelError(f"{where}: missing field {key!r}")
    return doc[key]


def _parse_discrete(doc: Mapping) -> tuple[DiscreteModel, tuple | None]:
    states = list(_require(doc, "states"))
    if len(set(states)) != len(states):
        raise ModelError("states: duplicate identifiers")
    actions = _require(doc, "actions")
    if isinstance(actions, list):
        actions_of = {x: list(actions) for x in states}
    elif isinstance(actions, Mapping):
        actions_of = {x: list(actions.get(x, [])) for x in states}
    else:
        raise ModelError("actions: expected a list or a state -> list mapping")
    for x in states:
        if not actions_of[x]:
            raise ModelError(f"actions: state {x!r} has no admissible action")
    known = set(states)
    rows: dict[tuple, dict] = {}
    for n, rec in enumerate(_require(doc, "kernel")):
        where = f"kernel[{n}]"
        x, u, y = _require(rec, "x", where), _require(rec, "u", where), _require(rec, "y", where)
        try:
            p = float(_require(rec, "p", where))
        except (TypeError, ValueError):
            raise ModelError(f"{where}: probability is not a number") from None
        if x not in known or y not in known:
            raise ModelError(f"{where}: unknown state in ({x!r} -> {y!r})")
        if u not in actions_of[x]:
            raise ModelError(f"{where}: action {u!r} not admissible in state {x!r}")
        if not (0.0 <= p <= 1.0):
            raise ModelError(f"{where}: probability {p} outside [0, 1]")
        row = rows.setdefault((x, u), {})
        row[y] = row.get(y, 0.0) + p
    for x in states:
        for u in actions_of[x]:
            row = rows.get((x, u))
            if not row:
                raise ModelError(f"kernel: missing row for (state={x!r}, action={u!r})")
            s = math.fsum(row.values())
            if abs(s - 1.0) > ROW_SUM_TOL:
                raise ModelError(f"kernel: row ({x!r}, {u!r}) sums to {s!r}, not 1")
            if s != 1.0:
                rows[(x, u)] = {y: p / s for y, p in row.items()}
    model = DiscreteModel.from_rows(states, actions_of, rows)
    safe = doc.get("safe_set")
    if safe is not None:
        bad = [x for x in safe if x not in known]
        if bad:
            raise ModelError(f"safe_set: unknown states {bad[:5]!r}")
        safe = tuple(safe)
    return model, safe


def _parse_box(spec, where: str) -> Box:
    try:
        lower, upper = spec["lower"], spec["upper"]
    except (KeyError, TypeError):
        raise ModelError(f"{where}: expected {{lower, upper}}") from None
    return Box(tuple(map(float, lower)), tuple(map(float, upper)))


def _parse_continuous(doc: Mapping) -> tuple[ContinuousModel, Region | None]:
    n = int(_require(doc, "state_dim"))
    m = int(_require(doc, "control_dim"))
    dyn = _require(doc, "dynamics")
    noise = _require(dyn, "noise", "dynamics")
    A = np.asarray(_require(dyn, "A", "dynamics"), dtype=float).reshape(n, n)
    B = np.asarray(_require(dyn, "B", "dynamics"), dtype=float).reshape(n, m)
    c = np.asarray(dyn.get("c", [0.0] * n), dtype=float).reshape(n)
    box = _parse_box(_require(doc, "control_box"), "control_box")
    L = doc.get("lipschitz_L")
    model = linear_gaussian_model(
        A, B, c,
        sigma=float(_require(noise, "sigma", "dynamics.noise")),
        control_box=box,
        kind=noise.get("kind", "gaussian"),
        truncation=noise.get("truncation"),
        lipschitz_L=None if L is None else float(L),
    )
    region = None
    if doc.get("region") is not None:
        region = Region(tuple(_parse_box(b, f"region[{i}]") for i, b in enumerate(doc["region"])))
        if region.dim != n:
            raise ModelError("region dimension differs from state_dim")
    return model, region


def parse_model(doc: Mapping) -> LoadedModel:
    kind = _require(doc, "type")
    if kind == "discrete":
        model, safe = _parse_discrete(doc)
        problems = validate(model)
        if problems:
            raise ModelError("; ".join(problems))
        return LoadedModel(model, safe_set=safe, name=doc.get("name"))
    if kind == "continuous":
        model, region = _parse_continuous(doc)
        return LoadedModel(model, region=region, grid=doc.get("grid"), name=doc.get("name"))
    raise ModelError(f"type: expected 'discrete' or 'continuous', got {kind!r}")


def load_model(path: str | Path) -> LoadedModel:
    """Parse a JSON model file; parse errors carry the line or field."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return parse_model(doc)


def discrete_to_json(model: DiscreteModel, safe_set: Iterable | None = None, name: str | None = None) -> dict:
    doc: dict[str, Any] = {"type": "discrete"}
    if name:
        doc["name"] = name
    doc["states"] = list(model.states)
    doc["actions"] = {x: list(model.actions_of[x]) for x in model.states}
    doc["kernel"] = [{"x": x, "u": u, "y": y, "p": p} for x, u, y, p in model.transitions()]
    if safe_set is not None:
        doc["safe_set"] = list(safe_set)
    return doc


def save_json(doc: Mapping, path: str | Path) -> None:
    # repr-based float output keeps all 17 significant digits
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
