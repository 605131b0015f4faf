"""Grid abstraction of continuous models and the approximate N-step PCIS loop.

States are gridded into uniform axis-aligned cells with centre representatives;
the control box likewise. A cell's kernel row is the density at the other cell
centres times their volumes, divided by its total when that total reaches one.
Mass that leaves Q (or is pruned as negligible) goes to an explicit sink state.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .finite_horizon import _dp, _check_horizon, shrink_loop
from .model import Box, ContinuousModel, DiscreteModel, ModelError, Region
from .results import MarkovPolicy, PcisResult

SINK = "sink"
MAX_STATE_CELLS = 1_000_000
PRUNE_TOL = 1e-12


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StateGrid:
    """Cells partitioning a region, with centres, diameters and volumes.

    Cells are half-open: a cell contains its lower faces and excludes its upper
    faces, except on the region's own upper boundary.
    """

    lower: np.ndarray
    upper: np.ndarray
    boxes: tuple[Box, ...]
    counts: tuple[tuple[int, ...], ...]
    offsets: tuple[int, ...]

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    @property
    def dim(self) -> int:
        return self.lower.shape[1]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def diameters(self) -> np.ndarray:
        return np.linalg.norm(self.upper - self.lower, axis=1)

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.upper - self.lower, axis=1)

    @property
    def grid_size(self) -> float:
        return float(self.diameters.max())

    def locate(self, x: Sequence[float]) -> int:
        """Index of the cell containing ``x``, or -1 outside the region."""
        x = np.asarray(x, dtype=float)
        for box, counts, off in zip(self.boxes, self.counts, self.offsets):
            lo, hi = np.asarray(box.lower), np.asarray(box.upper)
            if np.any(x < lo) or np.any(x > hi):
                continue
            width = (hi - lo) / np.asarray(counts)
            pos = np.floor((x - lo) / width).astype(int)
            pos = np.minimum(pos, np.asarray(counts) - 1)
            return off + int(np.ravel_multi_index(tuple(pos), counts))
        return -1


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """Control cells with representatives and the admissible set of each state cell."""

    lower: np.ndarray
    upper: np.ndarray
    eta: float
    admissible: tuple[np.ndarray, ...]

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    @property
    def representatives(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def diameters(self) -> np.ndarray:
        return np.linalg.norm(self.upper - self.lower, axis=1)

    @property
    def grid_size(self) -> float:
        return float(self.diameters.max())


@dataclass(frozen=True)
class ErrorModel:
    """Per-step abstraction error bounds tau_k = 4 * volume * L * (N - k)."""

    volume: float
    lipschitz_L: float
    delta: float
    horizon: int

    def tau(self, k: int, volume: float | None = None) -> float:
        if not 0 <= k <= self.horizon:
            raise ValueError(f"step {k} outside [0, {self.horizon}]")
        v = self.volume if volume is None else volume
        return 4.0 * v * self.lipschitz_L * (self.horizon - k)

    @property
    def tau0(self) -> float:
        return self.tau(0)

    @property
    def correction(self) -> float:
        return self.tau0 * self.delta

    def max_delta(self, epsilon: float) -> float:
        return math.inf if self.tau0 == 0 else (1.0 - epsilon) / self.tau0


def error_bound(err: ErrorModel, k: int, epsilon: float | None = None) -> dict:
    """tau_k, and for a target ``epsilon`` the abstract level and grid feasibility."""
    out = {"tau_k": err.tau(k), "tau_0": err.tau0, "correction": err.correction}
    if epsilon is not None:
        out["epsilon_hat"] = epsilon + err.correction
        out["max_delta"] = err.max_delta(epsilon)
        out["feasible"] = err.delta < out["max_delta"]
    return out


def _cells_per_axis(side: np.ndarray, edge: float) -> np.ndarray:
    return np.maximum(1, np.ceil(side / edge - 1e-9)).astype(int)


def _box_cells(box: Box, counts: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    axes = [np.linspace(l, h, n + 1) for l, h, n in zip(lo, hi, counts)]
    idx = np.indices(tuple(counts)).reshape(len(counts), -1).T
    lower = np.column_stack([axes[d][idx[:, d]] for d in range(len(counts))])
    upper = np.column_stack([axes[d][idx[:, d] + 1] for d in range(len(counts))])
    return lower, upper


def build_grids(cont: ContinuousModel, Q: Region, delta: float | None = None, *,
                state_cells: Sequence[int] | None = None,
                control_cells: Sequence[int] | None = None,
                max_cells: int = MAX_STATE_CELLS) -> tuple[StateGrid, ControlGrid, float]:
    """Uniform state and control grids; returns them with the effective grid size delta.

    With ``delta`` the per-axis edge is at most delta/sqrt(dim) so every cell
    diameter is at most delta. Explicit cell counts override that, and the
    effective delta becomes the larger of the two grid sizes.
    """
    if delta is None and (state_cells is None or control_cells is None):
        raise GridError("give delta or both state_cells and control_cells")
    if delta is not None and not delta > 0:
        raise GridError("grid size delta must be positive")
    if Q.dim != cont.state_dim:
        raise GridError("region dimension differs from the model state dimension")

    lowers, uppers, counts_all, offsets = [], [], [], []
    total = 0
    for box in Q.boxes:
        side = np.subtract(box.upper, box.lower)
        if state_cells is not None:
            counts = tuple(int(c) for c in state_cells)
            if len(counts) != box.dim or min(counts) < 1:
                raise GridError("state_cells must give a positive count per state axis")
        else:
            counts = tuple(_cells_per_axis(side, delta / math.sqrt(box.dim)))
        n = int(np.prod(counts))
        if total + n > max_cells:
            raise GridError(f"grid too fine: more than {max_cells} state cells")
        lo, hi = _box_cells(box, counts)
        lowers.append(lo)
        uppers.append(hi)
        counts_all.append(counts)
        offsets.append(total)
        total += n
    sgrid = StateGrid(np.vstack(lowers), np.vstack(uppers), Q.boxes, tuple(counts_all), tuple(offsets))

    ubox = cont.control_box
    if control_cells is not None:
        ucounts = tuple(int(c) for c in control_cells)
        if len(ucounts) != ubox.dim or min(ucounts) < 1:
            raise GridError("control_cells must give a positive count per control axis")
    else:
        ucounts = tuple(_cells_per_axis(np.subtract(ubox.upper, ubox.lower), delta / math.sqrt(ubox.dim)))
    ulo, uhi = _box_cells(ubox, ucounts)
    if delta is None:
        delta = max(sgrid.grid_size, float(np.linalg.norm(uhi[0] - ulo[0])))
    eta = float(delta)
    reps = 0.5 * (ulo + uhi)
    admissible = []
    centers = sgrid.centers
    for i in range(sgrid.size):
        allowed = cont.controls_at(centers[i])
        ok = np.array([allowed.distance(u) <= eta + 1e-12 for u in reps])
        if not ok.any():
            raise GridError(f"no admissible discrete control for cell {i}")
        admissible.append(np.flatnonzero(ok))
    ugrid = ControlGrid(ulo, uhi, eta, tuple(admissible))
    return sgrid, ugrid, float(delta)


def normalized_density(cont: ContinuousModel, grid: StateGrid, i: int, u: np.ndarray) -> np.ndarray:
    """Kernel row from cell ``i`` under control ``u`` over all cells (may sum below 1)."""
    x = grid.centers[i]
    t = np.asarray(cont.density(grid.centers, x, np.asarray(u, dtype=float)), dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ModelError("invalid density: negative or non-finite value")
    w = t * grid.volumes
    mass = w.sum()
    return w / mass if mass >= 1.0 else w


@dataclass(frozen=True, eq=False)
class Abstraction:
    """Finite abstraction of a continuous model on a region."""

    model: DiscreteModel
    state_grid: StateGrid
    control_grid: ControlGrid
    delta: float
    continuous: ContinuousModel
    region: Region
    cell_states: tuple = field(default=())

    def error_model(self, horizon: int) -> ErrorModel:
        return ErrorModel(self.region.volume, self.continuous.lipschitz_L, self.delta, horizon)

    def cell_index(self, state) -> int:
        return self.model.index(state)

    def control_of(self, action) -> np.ndarray:
        return self.control_grid.representatives[int(str(action)[1:])]


def abstract_model(cont: ContinuousModel, Q: Region, delta: float | None = None, *,
                   state_cells: Sequence[int] | None = None,
                   control_cells: Sequence[int] | None = None,
                   prune: float = PRUNE_TOL,
                   max_cells: int = MAX_STATE_CELLS, workers: int = 1) -> Abstraction:
    """Finite MDP over cell representatives plus an absorbing sink.

    Entries below ``prune`` are dropped and their mass added to the sink, which
    only ever makes the abstraction more pessimistic. Rows are built over
    ``workers`` threads; the result does not depend on the worker count.
    """
    sgrid, ugrid, delta = build_grids(cont, Q, delta, state_cells=state_cells,
                                      control_cells=control_cells, max_cells=max_cells)
    n = sgrid.size
    cells = tuple(f"q{i}" for i in range(n))
    states = cells + (SINK,)
    actions_of = {q: tuple(f"u{a}" for a in ugrid.admissible[i]) for i, q in enumerate(cells)}
    actions_of[SINK] = ("stay",)
    reps = ugrid.representatives

    def cell_rows(i: int) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        for a in ugrid.admissible[i]:
            row = normalized_density(cont, sgrid, i, reps[a])
            keep = np.flatnonzero(row >= prune)
            vals = row[keep]
            sink = 1.0 - vals.sum()
            if sink > 0.0:
                keep = np.append(keep, n)
                vals = np.append(vals, sink)
            out.append((keep, vals))
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_cell = list(pool.map(cell_rows, range(n), chunksize=max(1, n // (8 * workers))))
    else:
        per_cell = [cell_rows(i) for i in range(n)]
    chunks_i = [k for rows in per_cell for k, _ in rows]
    chunks_v = [v for rows in per_cell for _, v in rows]
    indptr = np.concatenate([[0], np.cumsum([k.size for k in chunks_i])]).tolist()
    nnz = indptr[-1]
    chunks_i.append(np.array([n]))
    chunks_v.append(np.array([1.0]))
    indptr.append(nnz + 1)
    kernel = sparse.csr_matrix(
        (np.concatenate(chunks_v), np.concatenate(chunks_i), np.asarray(indptr)),
        shape=(len(indptr) - 1, n + 1),
    )
    model = DiscreteModel(states, actions_of, kernel)
    return Abstraction(model, sgrid, ugrid, delta, cont, Q, cells)


class InfeasibleGridError(ValueError):
    def __init__(self, delta: float, max_delta: float):
        self.delta, self.max_delta = delta, max_delta
        super().__init__(
            f"grid size {delta:.6g} too coarse for a certified result: "
            f"need delta < {max_delta:.6g} (or ignore the approximation error)"
        )


def approx_finite_pcis(cont: ContinuousModel | None, Q: Region | None, N: int, epsilon: float,
                       delta: float | None = None, ignore_error: bool = False, *,
                       state_cells: Sequence[int] | None = None,
                       control_cells: Sequence[int] | None = None,
                       abstraction: Abstraction | None = None, workers: int = 1) -> PcisResult:
    """Approximate N-step epsilon-PCIS of a continuous model inside ``Q``.

    Each round compares the abstract values against epsilon + tau_0(P_i) delta,
    where tau_0 uses the volume of the current cell set. With ``ignore_error``
    the plain epsilon is used and the result is marked uncertified. A prebuilt
    ``abstraction`` may be passed to reuse one grid across runs.
    """
    _check_horizon(N)
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if abstraction is None:
        abstraction = abstract_model(cont, Q, delta, state_cells=state_cells,
                                     control_cells=control_cells, workers=workers)
    ab = abstraction
    err = ab.error_model(N)
    if not ignore_error:
        if epsilon >= 1.0:
            raise ValueError("certified computation needs epsilon < 1")
        if not ab.delta < err.max_delta(epsilon):
            raise InfeasibleGridError(ab.delta, err.max_delta(epsilon))
    vols = ab.state_grid.volumes
    L = ab.continuous.lipschitz_L
    corrections: list[float] = []

    def threshold(R):
        if ignore_error:
            return epsilon
        volume = float(vols[R.indices].sum())
        c = 4.0 * volume * L * N * ab.delta
        corrections.append(c)
        return epsilon + c

    def evaluate(R):
        values, choice = _dp(R, N)
        return values[0], MarkovPolicy(R.states, choice, ab.model.actions_of)

    states, probs, policy, trace, thresholds, converged = shrink_loop(ab.model, ab.cell_states, evaluate, threshold)
    idx = np.array([ab.model.index(x) for x in states], dtype=np.int64)
    diagnostics = [] if states else ["empty invariant set"]
    if not converged:
        diagnostics.append("iteration cap reached before the set stabilised")
    return PcisResult(
        states=states, probabilities=probs, policy=policy, trace=trace, epsilon=float(epsilon),
        horizon=int(N), method="dp", certified=not ignore_error,
        tau_delta=corrections[-1] if corrections else 0.0, thresholds=thresholds,
        diagnostics=diagnostics, converged=converged, candidates=ab.cell_states,
        extra={
            "abstraction": ab,
            "cells": idx,
            "boxes": [(ab.state_grid.lower[i].tolist(), ab.state_grid.upper[i].tolist()) for i in idx],
            "volume": float(vols[idx].sum()) if idx.size else 0.0,
            "tau0_delta_full": err.correction,
            "delta": ab.delta,
        },
    )
