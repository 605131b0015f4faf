"""Infinite-horizon invariance: value iteration, MILP, RCIS and the set algorithms."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain, inside, random_mdp
from pcis.finite_horizon import dp_backward
from pcis.generators import robot_grid
from pcis.infinite_horizon import (
    SeedNotInvariantError,
    build_infinite_milp,
    check_existence_conditions,
    infinite_pcis_via_rcis,
    largest_infinite_pcis,
    rcis_discrete,
    solve_ginf_exact,
    value_iteration_ginf,
)
from pcis.model import restrict
from pcis.solver import solve_milp

TOL = 1e-9


def absorbing():
    return chain({("s0", "a"): {"s0": 1.0}})


def leaky():
    return chain({("s0", "a"): {"s0": 0.8, "out": 0.2}})


# ---------------------------------------------------------------------------
# value iteration
# ---------------------------------------------------------------------------


def test_vi_absorbing_state():
    G = value_iteration_ginf(absorbing(), {"s0"})
    assert G["s0"] == 1.0 and G.iterations == 1 and G.converged


def test_vi_geometric_decay_reaches_zero():
    G = value_iteration_ginf(leaky(), {"s0"})
    assert G["s0"] == pytest.approx(0.0, abs=1e-8)
    assert G.monotone


def test_vi_two_state_fixed_point(two_state):
    G = value_iteration_ginf(two_state, {"s0", "s1"})
    assert G["s0"] == pytest.approx(0.9, abs=1e-12)
    assert G["s1"] == 1.0


def test_vi_iteration_cap_is_flagged():
    G = value_iteration_ginf(leaky(), {"s0"}, max_iter=3)
    assert not G.converged
    assert G.residual > 0


def test_vi_rejects_nonpositive_tol():
    with pytest.raises(ValueError):
        value_iteration_ginf(absorbing(), {"s0"}, tol=0.0)


# ---------------------------------------------------------------------------
# MILP
# ---------------------------------------------------------------------------


def test_milp_absorbing_state():
    milp = build_infinite_milp(absorbing(), {"s0"})
    out = solve_milp(milp, backend="bnb")
    assert out.x[0] == pytest.approx(1.0) and out.x[1] == 1.0


def test_milp_leaky_state_is_zero():
    out = solve_milp(build_infinite_milp(leaky(), {"s0"}), backend="bnb")
    assert out.x[0] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("backend", ["bnb", "highs"])
def test_milp_two_state_fixed_point(two_state, backend):
    G, policy = solve_ginf_exact(two_state, {"s0", "s1"}, backend=backend)
    assert G["s0"] == pytest.approx(0.9, abs=1e-9) and G["s1"] == pytest.approx(1.0, abs=1e-9)
    vi = value_iteration_ginf(two_state, {"s0", "s1"}, tol=TOL)
    assert np.max(np.abs(G.values - vi.values)) <= 10 * TOL
    assert policy.action("s1") == "a"


def test_milp_rejects_small_big_m(two_state):
    with pytest.raises(ValueError):
        build_infinite_milp(two_state, {"s0"}, big_m=1.0)


def test_milp_policy_on_absorbing_state():
    _, policy = solve_ginf_exact(absorbing(), {"s0"})
    assert policy.action("s0") == "a"


def test_robot_absorbing_cell_has_value_one():
    m, safe = robot_grid()
    cell = [x for x in safe if x.startswith("3,4,")]
    G, _ = solve_ginf_exact(m, cell)
    assert np.allclose(G.values, 1.0)


# ---------------------------------------------------------------------------
# RCIS
# ---------------------------------------------------------------------------


def test_rcis_keeps_absorbing_two_cycle():
    m = chain({("s0", "a"): {"s1": 1.0}, ("s1", "a"): {"s0": 1.0}})
    assert rcis_discrete(m, {"s0", "s1"}) == {"s0", "s1"}


def test_rcis_of_leaky_chain_is_empty():
    m = chain({("s0", "a"): {"s1": 0.9, "out": 0.1}, ("s1", "a"): {"s0": 0.95, "out": 0.05}})
    assert rcis_discrete(m, {"s0", "s1"}) == set()


def test_rcis_removal_cascades(leaky_chain):
    assert rcis_discrete(leaky_chain, {"s0", "s1"}) == set()


def test_robot_rcis_holds_the_absorbing_cell():
    m, safe = robot_grid()
    R = rcis_discrete(m, safe)
    assert {f"3,4,{h}" for h in "NESW"} <= R


# ---------------------------------------------------------------------------
# Shrinking and seed-based infinite-horizon sets
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("method", ["milp", "vi"])
def test_rcis_input_is_returned_in_one_iteration(method):
    m = chain({("s0", "a"): {"s1": 1.0}, ("s1", "a"): {"s0": 1.0}})
    res = largest_infinite_pcis(m, {"s0", "s1"}, 0.9, method=method)
    assert set(res.states) == {"s0", "s1"}
    assert res.iterations == 1
    assert all(res.probabilities[x] == pytest.approx(1.0) for x in ("s0", "s1"))
    assert res.horizon_label == "inf"


def cascade_model():
    """s0 is absorbing; s2 reaches it w.p. 0.85; s1 splits evenly between s0 and s2."""
    return chain({
        ("s0", "a"): {"s0": 1.0},
        ("s1", "a"): {"s0": 0.5, "s2": 0.5},
        ("s2", "a"): {"s0": 0.85, "out": 0.15},
    })


@pytest.mark.parametrize("method", ["milp", "vi"])
def test_three_state_cascade(method):
    # round 1: G = (1, 0.925, 0.85) drops s2; round 2 on {s0, s1}: G(s1) = 0.5 drops s1
    res = largest_infinite_pcis(cascade_model(), {"s0", "s1", "s2"}, 0.9, method=method)
    assert res.states == ("s0",)
    assert res.trace == [3, 2, 1, 1]


def test_rcis_seeded_two_state(two_state):
    both = infinite_pcis_via_rcis(two_state, {"s0", "s1"}, 0.85)
    assert set(both.states) == {"s0", "s1"}
    assert both.policy.action("s0") == "a"
    only = infinite_pcis_via_rcis(two_state, {"s0", "s1"}, 0.95)
    assert set(only.states) == {"s1"}


def test_rcis_seeded_on_rcis_returns_q():
    m = chain({("s0", "a"): {"s1": 1.0}, ("s1", "a"): {"s0": 1.0}})
    assert set(infinite_pcis_via_rcis(m, {"s0", "s1"}, 0.5).states) == {"s0", "s1"}


def test_rcis_seeded_without_seed_is_empty():
    res = infinite_pcis_via_rcis(leaky(), {"s0"}, 0.5)
    assert res.empty and "no RCIS seed" in res.diagnostics


def test_existence_conditions_vacuous_on_rcis():
    m = chain({("s0", "a"): {"s1": 1.0}, ("s1", "a"): {"s0": 1.0}})
    assert check_existence_conditions(m, {"s0", "s1"}, {"s0", "s1"}, 0.9) == {
        "necessary_holds": True, "sufficient_holds": True}


def test_existence_conditions_two_state(two_state):
    out = check_existence_conditions(two_state, {"s0", "s1"}, {"s1"}, 0.85)
    assert out == {"necessary_holds": True, "sufficient_holds": True}


def test_existence_conditions_reject_non_rcis_seed():
    with pytest.raises(SeedNotInvariantError, match="seed set not robustly invariant"):
        check_existence_conditions(leaky(), {"s0"}, {"s0"}, 0.5)


def test_sufficient_fails_where_necessary_holds():
    # s0 keeps 0.92 inside Q but never reaches the seed s1
    m = chain({
        ("s0", "a"): {"s0": 0.92, "out": 0.08},
        ("s1", "a"): {"s1": 1.0},
    })
    out = check_existence_conditions(m, {"s0", "s1"}, {"s1"}, 0.9)
    assert out == {"necessary_holds": True, "sufficient_holds": False}
    assert check_existence_conditions(m, {"s0", "s1"}, {"s1"}, 0.95)["necessary_holds"] is False


# ---------------------------------------------------------------------------
# Oracle suites and invariants
# ---------------------------------------------------------------------------


def test_milp_matches_vi_on_100_random_models():
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(100):
        m = random_mdp(rng, int(rng.integers(1, 7)), 3)
        Q = inside(m)
        G, _ = solve_ginf_exact(m, Q, backend="bnb")
        vi = value_iteration_ginf(m, Q, tol=TOL)
        worst = max(worst, float(np.max(np.abs(G.values - vi.values))))
    assert worst <= 10 * TOL


def test_milp_matches_vi_within_the_contraction_bound():
    # the stopping rule only bounds the last step; the distance to the limit
    # is at most step * rho / (1 - rho) for the observed contraction rate rho
    rng = np.random.default_rng(21)
    for _ in range(100):
        m = random_mdp(rng, int(rng.integers(1, 7)), 3)
        Q = inside(m)
        G, _ = solve_ginf_exact(m, Q, backend="bnb")
        vi = value_iteration_ginf(m, Q, tol=TOL)
        R = restrict(m, Q)
        nxt = np.array([(R.kernel @ vi.values)[R.row_start[i]:R.row_start[i + 1]].max() for i in range(R.size)])
        step = float(np.max(np.abs(nxt - vi.values)))
        rho = step / vi.residual if vi.residual > 0 else 0.0
        bound = vi.residual * rho / (1 - rho) if rho < 1 else np.inf
        assert np.max(np.abs(G.values - vi.values)) <= 10 * TOL + bound * 1.01


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_vi_is_monotone_nonincreasing(seed):
    m = random_mdp(np.random.default_rng(seed), 6, 3)
    R = restrict(m, inside(m))
    G = np.ones(R.size)
    for _ in range(200):
        q = R.kernel @ G
        G_new = np.array([q[R.row_start[i]:R.row_start[i + 1]].max() for i in range(R.size)])
        assert np.all(G_new <= G + 1e-15)
        G = G_new
    assert value_iteration_ginf(m, inside(m)).monotone


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_g_is_one_on_the_rcis(seed):
    m = random_mdp(np.random.default_rng(seed), 7, 3, sparsity=0.6)
    R = rcis_discrete(m, inside(m))
    if not R:
        return
    G = value_iteration_ginf(m, R)
    assert np.allclose(G.values, 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), eps=st.floats(0.05, 1.0))
def test_sufficient_condition_means_q_is_kept(seed, eps):
    m = random_mdp(np.random.default_rng(seed), 6, 3, sparsity=0.5)
    Q = inside(m)
    seed_set = rcis_discrete(m, Q)
    if not seed_set:
        return
    if check_existence_conditions(m, Q, seed_set, eps)["sufficient_holds"]:
        assert set(largest_infinite_pcis(m, Q, eps, method="milp").states) == set(Q)


def test_rcis_seeded_is_inside_algorithm_3_on_50_models():
    rng = np.random.default_rng(22)
    done = 0
    while done < 50:
        m = random_mdp(rng, 6, 3, sparsity=0.5)
        eps = float(rng.uniform(0.3, 1.0))
        Q = inside(m)
        a4 = infinite_pcis_via_rcis(m, Q, eps)
        a3 = largest_infinite_pcis(m, Q, eps, method="milp")
        assert set(a4.states) <= set(a3.states)
        done += 1


@pytest.mark.parametrize("N", [1, 5, 20])
def test_infinite_value_below_finite_value(N):
    rng = np.random.default_rng(23 + N)
    for _ in range(30):
        m = random_mdp(rng, 6, 3)
        Q = inside(m)
        G = value_iteration_ginf(m, Q)
        V, _ = dp_backward(m, Q, N)
        assert np.all(G.values <= V.values[0] + 1e-12)
