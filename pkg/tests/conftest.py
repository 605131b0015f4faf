"""Shared builders for small hand models and random MDPs."""

from __future__ import annotations

import numpy as np
import pytest

from pcis.model import DiscreteModel


def random_mdp(rng: np.random.Generator, n_states: int, max_actions: int, leak: bool = True,
               sparsity: float = 0.4) -> DiscreteModel:
    """Random MDP over ``s0..s{n-1}`` plus an absorbing ``out`` state.

    Rows put random mass on the numbered states and, when ``leak`` is set,
    on ``out`` too, so working sets over the numbered states are leaky.
    """
    states = [f"s{i}" for i in range(n_states)] + ["out"]
    actions_of = {}
    rows = {}
    for i in range(n_states):
        k = int(rng.integers(1, max_actions + 1))
        acts = tuple(f"a{j}" for j in range(k))
        actions_of[f"s{i}"] = acts
        for u in acts:
            w = rng.random(n_states + 1)
            w[:-1] *= rng.random(n_states) > sparsity
            if not leak or rng.random() < 0.3:
                w[-1] = 0.0
            if w.sum() == 0:
                w[int(rng.integers(0, n_states))] = 1.0
            w /= w.sum()
            rows[(f"s{i}", u)] = {y: float(p) for y, p in zip(states, w) if p > 0}
    actions_of["out"] = ("stay",)
    rows[("out", "stay")] = {"out": 1.0}
    return DiscreteModel.from_rows(states, actions_of, rows)


def inside(model: DiscreteModel) -> tuple:
    return tuple(x for x in model.states if x != "out")


def chain(rows: dict, actions: dict | None = None) -> DiscreteModel:
    """Model from ``{(x, u): {y: p}}`` with states in first-seen order."""
    states: list = []
    for (x, _), row in rows.items():
        for s in (x, *row):
            if s not in states:
                states.append(s)
    if actions is None:
        actions = {}
        for x, u in rows:
            actions.setdefault(x, [])
            if u not in actions[x]:
                actions[x].append(u)
    for x in states:
        if x not in actions:
            actions[x] = ["stay"]
            rows[(x, "stay")] = {x: 1.0}
    return DiscreteModel.from_rows(states, actions, rows)


@pytest.fixture
def two_state():
    """s0 moves to absorbing s1 with 0.9 and leaks 0.1 to ``out``."""
    return chain({
        ("s0", "a"): {"s1": 0.9, "out": 0.1},
        ("s1", "a"): {"s1": 1.0},
    })


@pytest.fixture
def leaky_chain():
    """s0 -> s1 -> exit, each with probability 1."""
    return chain({
        ("s0", "a"): {"s1": 1.0},
        ("s1", "a"): {"exit": 1.0},
    })
