"""Built-in example systems: robot grid MDP, room thermal model, unstable 2-D linear system."""

from __future__ import annotations

import numpy as np

from .model import (
    Box,
    DiscreteModel,
    LinearGaussianDynamics,
    Region,
    discrete_to_json,
    linear_gaussian_model,
)

# ---------------------------------------------------------------------------
# Robot in a 4x4 partitioned workspace
# ---------------------------------------------------------------------------

HEADINGS = {"E": (1, 0), "W": (-1, 0), "S": (0, -1), "N": (0, 1)}
_RIGHT = {"E": "S", "S": "W", "W": "N", "N": "E"}
_LEFT = {v: k for k, v in _RIGHT.items()}
_BACK = {"E": "W", "W": "E", "N": "S", "S": "N"}
ROBOT_ACTIONS = ("FR", "BK", "TRFR", "TLFR")

ROBOT_OBSTACLES = ((2, 2), (2, 3), (4, 2))
ROBOT_ABSORBING = (3, 4)


def robot_state(px: int, py: int, heading: str) -> str:
    return f"{px},{py},{heading}"


def _outcomes(px: int, py: int, h: str, action: str, forward: float, drift: float,
              turn: float, slip: float) -> list[tuple[int, int, str, float]]:
    """(px', py', heading', probability) for one action before collision handling."""

    def step(d: str, extra: str | None = None) -> tuple[int, int]:
        dx, dy = HEADINGS[d]
        if extra is not None:
            ex, ey = HEADINGS[extra]
            dx, dy = dx + ex, dy + ey
        return px + dx, py + dy

    if action in ("FR", "BK"):
        d = h if action == "FR" else _BACK[h]
        return [
            (*step(d), h, forward),
            (*step(d, _LEFT[h]), h, drift),
            (*step(d, _RIGHT[h]), h, drift),
        ]
    new = _RIGHT[h] if action == "TRFR" else _LEFT[h]
    return [
        (*step(new), new, turn),
        (*step(h), h, slip),
        (*step(_BACK[h]), _BACK[h], slip),
    ]


def robot_grid(
    obstacles=ROBOT_OBSTACLES,
    absorbing=ROBOT_ABSORBING,
    size: int = 4,
    forward: float = 0.80,
    drift: float = 0.10,
    turn: float = 0.95,
    slip: float = 0.025,
) -> tuple[DiscreteModel, tuple]:
    """64-state robot MDP and its safe state space (obstacle states excluded).

    Moves into an obstacle or across the workspace boundary are collisions;
    collision mass is sent to the first obstacle cell (same heading), which
    lies outside the safe space. Obstacle states are absorbing. In the
    absorbing cell every action keeps the robot in place.
    """
    obstacles = tuple(map(tuple, obstacles))
    if not obstacles:
        raise ValueError("robot grid needs at least one obstacle cell to hold collisions")
    states = [robot_state(px, py, h) for px in range(1, size + 1) for py in range(1, size + 1) for h in HEADINGS]
    actions_of = {x: ROBOT_ACTIONS for x in states}
    wreck = obstacles[0]
    rows: dict = {}
    for px in range(1, size + 1):
        for py in range(1, size + 1):
            for h in HEADINGS:
                x = robot_state(px, py, h)
                for a in ROBOT_ACTIONS:
                    if (px, py) in obstacles or (px, py) == tuple(absorbing):
                        rows[(x, a)] = {x: 1.0}
                        continue
                    row: dict = {}
                    for qx, qy, qh, p in _outcomes(px, py, h, a, forward, drift, turn, slip):
                        if not (1 <= qx <= size and 1 <= qy <= size) or (qx, qy) in obstacles:
                            qx, qy = wreck
                        y = robot_state(qx, qy, qh)
                        row[y] = row.get(y, 0.0) + p
                    rows[(x, a)] = row
    model = DiscreteModel.from_rows(states, actions_of, rows)
    safe = tuple(x for x in states if tuple(map(int, x.split(",")[:2])) not in obstacles)
    return model, safe


def robot_grid_document() -> dict:
    model, safe = robot_grid()
    doc = discrete_to_json(model, safe_set=safe, name="robot-grid")
    doc["obstacles"] = [list(c) for c in ROBOT_OBSTACLES]
    doc["absorbing"] = list(ROBOT_ABSORBING)
    return doc


# ---------------------------------------------------------------------------
# Room temperature regulation
# ---------------------------------------------------------------------------

THERMAL = dict(A=0.9, B=1.0, C=0.1, outside=15.0, sigma=0.5, u_max=2.0, low=23.0, high=28.0)


def thermal(u_max: float = THERMAL["u_max"], sigma: float = THERMAL["sigma"]):
    """x' = 0.9 x + u + 0.1*15 + w, w ~ N(0, sigma^2), |u| <= u_max, on Q = [23, 28].

    Returns the model and Q. The Lipschitz constant is the Gaussian-gradient
    bound of :meth:`LinearGaussianDynamics.lipschitz` (about 0.968 here).
    """
    p = THERMAL
    model = linear_gaussian_model(
        [[p["A"]]], [[p["B"]]], [p["C"] * p["outside"]], sigma=sigma,
        control_box=Box((-u_max,), (u_max,)),
    )
    return model, Region.box([p["low"]], [p["high"]])


# ---------------------------------------------------------------------------
# Unstable 2-D linear system
# ---------------------------------------------------------------------------

LINEAR2D_A = ((1.6, 1.1), (-0.7, 1.2))
LINEAR2D_B = ((1.0,), (1.0,))


def linear2d(u_max: float = 0.25, sigma: float = 1 / 30, kind: str = "gaussian",
             truncation: float | None = None):
    """x' = A x + B u + w on Q = [-0.5, 0.5]^2.

    The control bound appears both as 0.25 and 0.1 in the source example;
    ``u_max`` defaults to 0.25 and can be changed. ``kind="truncated_gaussian"``
    with ``truncation=0.05`` gives the bounded-noise variant.
    """
    model = linear_gaussian_model(
        LINEAR2D_A, LINEAR2D_B, sigma=sigma, control_box=Box((-u_max,), (u_max,)),
        kind=kind, truncation=truncation,
    )
    return model, Region.box([-0.5, -0.5], [0.5, 0.5])


def _continuous_document(model, region: Region, name: str, grid: dict) -> dict:
    dyn: LinearGaussianDynamics = model.description["dynamics"]
    return {
        "type": "continuous",
        "name": name,
        "state_dim": model.state_dim,
        "control_dim": model.control_dim,
        "dynamics": dyn.to_json(),
        "lipschitz_L": model.lipschitz_L,
        "control_box": {"lower": list(model.control_box.lower), "upper": list(model.control_box.upper)},
        "region": [{"lower": list(b.lower), "upper": list(b.upper)} for b in region.boxes],
        "grid": grid,
    }


def thermal_document() -> dict:
    model, region = thermal()
    return _continuous_document(model, region, "thermal", {"state_cells": [100], "control_cells": [41]})


def linear2d_document() -> dict:
    model, region = linear2d()
    return _continuous_document(model, region, "double-integrator-like",
                                {"state_cells": [50, 50], "control_cells": [11]})


EXAMPLES = {
    "robot-grid": robot_grid_document,
    "thermal": thermal_document,
    "double-integrator-like": linear2d_document,
}


def example_document(name: str) -> dict:
    try:
        return EXAMPLES[name]()
    except KeyError:
        raise ValueError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None
