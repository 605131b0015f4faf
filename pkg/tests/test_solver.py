"""LP/MILP solver checks against vertex and assignment enumeration."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcis.solver import INF, LinearProgram, MixedIntegerLinearProgram, solve_lp, solve_milp, to_lp_format


# ---------------------------------------------------------------------------
# Enumeration oracles
# ---------------------------------------------------------------------------


def vertex_enumeration(lp: LinearProgram) -> tuple[str, float | None]:
    """Optimum of a bounded LP by solving every n x n active set.

    Variable bounds are treated as constraints; equality rows are always active.
    """
    A, b = lp.dense()
    n = lp.n_vars
    G, h, rels = [], [], []
    for a, r, rel in zip(A, b, lp.relations):
        if not np.any(a):
            # a zero row is either always satisfied or never
            holds = {"<=": 0 <= r + 1e-9, ">=": 0 >= r - 1e-9, "==": abs(r) <= 1e-9}[rel]
            if not holds:
                return "infeasible", None
            continue
        G.append(a)
        h.append(r)
        rels.append(rel)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        G += [e, e]
        h += [lp.lower[j], lp.upper[j]]
        rels += [">=", "<="]
    G = np.array(G)
    h = np.array(h)
    eq_idx = [i for i, r in enumerate(rels) if r == "=="]
    free_idx = [i for i, r in enumerate(rels) if r != "=="]
    need = n - len(eq_idx)
    if need < 0:
        combos = [()]
    else:
        combos = list(itertools.combinations(free_idx, need))
    c = np.asarray(lp.objective)
    best = None
    sets = [list(eq_idx) + list(cmb) for cmb in combos]
    if not sets or len(sets[0]) != n:
        return "skip", None
    S = np.array(sets)
    M = G[S]
    r = h[S]
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-9
    if not ok.any():
        return "infeasible", None
    X = np.linalg.solve(M[ok], r[ok][..., None])[..., 0]
    lhs = X @ G.T
    feas = np.ones(len(X), dtype=bool)
    for i, rel in enumerate(rels):
        if rel == "<=":
            feas &= lhs[:, i] <= h[i] + 1e-9
        elif rel == ">=":
            feas &= lhs[:, i] >= h[i] - 1e-9
        else:
            feas &= np.abs(lhs[:, i] - h[i]) <= 1e-9
    if not feas.any():
        return "infeasible", None
    vals = X[feas] @ c
    best = vals.max() if lp.sense == "max" else vals.min()
    return "optimal", float(best)


def random_lp(rng: np.random.Generator) -> LinearProgram:
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 9))
    lp = LinearProgram(sense=str(rng.choice(["min", "max"])))
    for j in range(n):
        lo = float(rng.integers(-5, 1))
        hi = lo + float(rng.integers(1, 8))
        lp.add_variable(f"x{j}", lo, hi, float(rng.normal()))
    for _ in range(m):
        coeffs = {j: float(rng.integers(-4, 5)) for j in range(n) if rng.random() < 0.7}
        rel = str(rng.choice(["<=", ">=", "=="], p=[0.45, 0.45, 0.1]))
        lp.add_constraint(coeffs, rel, float(rng.integers(-6, 7)))
    return lp


def brute_force_milp(milp: MixedIntegerLinearProgram) -> tuple[str, float | None]:
    lp = milp.lp
    bins = sorted(milp.binaries)
    best = None
    for assign in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = list(lp.lower), list(lp.upper)
        for j, v in zip(bins, assign):
            lo[j] = hi[j] = v
        fixed = LinearProgram(lp.sense, list(lp.names), list(lp.objective), lo, hi,
                              list(lp.rows), list(lp.relations), list(lp.rhs))
        out = solve_lp(fixed)
        if out.optimal and (best is None or (out.objective > best if lp.sense == "max" else out.objective < best)):
            best = out.objective
    return ("infeasible", None) if best is None else ("optimal", best)


def random_milp(rng: np.random.Generator) -> MixedIntegerLinearProgram:
    milp = MixedIntegerLinearProgram(LinearProgram(sense=str(rng.choice(["min", "max"]))))
    nb = int(rng.integers(1, 5))
    nc = int(rng.integers(0, 3))
    for j in range(nb):
        milp.add_binary(f"k{j}", float(rng.normal()))
    for j in range(nc):
        milp.lp.add_variable(f"y{j}", 0.0, float(rng.integers(1, 5)), float(rng.normal()))
    n = nb + nc
    for _ in range(int(rng.integers(1, 6))):
        coeffs = {j: float(rng.integers(-3, 4)) for j in range(n) if rng.random() < 0.7}
        milp.lp.add_constraint(coeffs, str(rng.choice(["<=", ">="])), float(rng.integers(-2, 4)))
    return milp


# ---------------------------------------------------------------------------
# Operation examples
# ---------------------------------------------------------------------------


def test_single_binding_constraint():
    lp = LinearProgram(sense="min")
    x = lp.add_variable("x", -INF, INF, 1.0)
    lp.add_constraint({x: 1.0}, ">=", 3.0)
    out = solve_lp(lp)
    assert out.optimal
    assert out.x[x] == pytest.approx(3.0) and out.objective == pytest.approx(3.0)


def test_two_variable_polyhedron():
    lp = LinearProgram(sense="min")
    v0 = lp.add_variable("v0", -INF, INF, 1.0)
    v1 = lp.add_variable("v1", -INF, INF, 1.0)
    lp.add_constraint({v0: 1.0, v1: -0.8}, ">=", 0.0)
    lp.add_constraint({v1: 1.0}, ">=", 1.0)
    out = solve_lp(lp)
    assert out.x[v0] == pytest.approx(0.8, abs=1e-9)
    assert out.x[v1] == pytest.approx(1.0, abs=1e-9)


def test_contradictory_constraints_are_infeasible():
    lp = LinearProgram(sense="min")
    x = lp.add_variable("x", -INF, INF, 0.0)
    lp.add_constraint({x: 1.0}, ">=", 1.0)
    lp.add_constraint({x: 1.0}, "<=", 0.0)
    assert solve_lp(lp).status == "infeasible"


def test_unbounded_is_reported():
    lp = LinearProgram(sense="max")
    x = lp.add_variable("x", 0.0, INF, 1.0)
    lp.add_constraint({x: 1.0}, ">=", 1.0)
    assert solve_lp(lp).status == "unbounded"


def test_pivot_limit_is_a_status():
    lp = LinearProgram(sense="max")
    xs = [lp.add_variable(f"x{j}", 0.0, 1.0, 1.0) for j in range(4)]
    lp.add_constraint({x: 1.0 for x in xs}, "<=", 3.0)
    assert solve_lp(lp, max_pivots=1).status == "iteration-limit"


def _kappa_milp() -> tuple[MixedIntegerLinearProgram, int, int]:
    milp = MixedIntegerLinearProgram(LinearProgram(sense="max"))
    g = milp.lp.add_variable("g", 0.0, 1.0, 1.0)
    k = milp.add_binary("kappa")
    # g <= 0.9 + (1 - k) 2  and  g <= 0.4 + 2 k
    milp.lp.add_constraint({g: 1.0, k: 2.0}, "<=", 2.9)
    milp.lp.add_constraint({g: 1.0, k: -2.0}, "<=", 0.4)
    return milp, g, k


@pytest.mark.parametrize("backend", ["bnb", "highs"])
def test_milp_example(backend):
    milp, g, k = _kappa_milp()
    out = solve_milp(milp, backend=backend)
    assert out.optimal
    assert out.x[g] == pytest.approx(0.9, abs=1e-7) and out.x[k] == 1.0


def test_fixed_binaries_reduce_to_lp():
    milp, g, k = _kappa_milp()
    milp.lp.lower[k] = milp.lp.upper[k] = 0.0
    out = solve_milp(milp, backend="bnb")
    assert out.nodes == 1
    assert out.objective == pytest.approx(solve_lp(milp.lp).objective)
    assert out.x[g] == pytest.approx(0.4)


def test_contradictory_binary_is_infeasible():
    milp = MixedIntegerLinearProgram(LinearProgram(sense="max"))
    k = milp.add_binary("k", 1.0)
    milp.lp.add_constraint({k: 1.0}, ">=", 0.3)
    milp.lp.add_constraint({k: 1.0}, "<=", 0.7)
    assert solve_milp(milp, backend="bnb").status == "infeasible"


def test_node_limit_is_a_status():
    milp = MixedIntegerLinearProgram(LinearProgram(sense="max"))
    ks = [milp.add_binary(f"k{j}", 1.0) for j in range(6)]
    milp.lp.add_constraint({k: 2.0 for k in ks}, "<=", 7.0)
    assert solve_milp(milp, backend="bnb", max_nodes=2).status == "node-limit"


def test_lp_format_dump_lists_sections():
    milp, g, k = _kappa_milp()
    text = to_lp_format(milp)
    for section in ("Maximize", "Subject To", "Bounds", "Binary", "End"):
        assert section in text
    assert "c0: 1 g + 2 kappa <= 2.9" in text


# ---------------------------------------------------------------------------
# Oracle suites
# ---------------------------------------------------------------------------


def test_lp_matches_vertex_enumeration_500():
    rng = np.random.default_rng(2024)
    checked = 0
    worst = 0.0
    for _ in range(500):
        lp = random_lp(rng)
        status, best = vertex_enumeration(lp)
        if status == "skip":
            continue
        out = solve_lp(lp)
        assert out.status == status, (status, out.status)
        if status == "optimal":
            worst = max(worst, abs(out.objective - best))
            assert lp.max_violation(out.x) <= 1e-7
        checked += 1
    assert checked >= 450
    assert worst <= 1e-6


def test_milp_matches_assignment_enumeration_500():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(500):
        milp = random_milp(rng)
        status, best = brute_force_milp(milp)
        out = solve_milp(milp, backend="bnb")
        assert out.status == status
        if status == "optimal":
            worst = max(worst, abs(out.objective - best))
            bins = sorted(milp.binaries)
            assert np.all(np.abs(out.x[bins] - np.round(out.x[bins])) <= 1e-6)
            assert milp.lp.max_violation(out.x) <= 1e-7
    assert worst <= 1e-6


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_highs_backend_agrees_with_reference(seed):
    rng = np.random.default_rng(seed)
    lp = random_lp(rng)
    a, b = solve_lp(lp), solve_lp(lp, backend="highs")
    assert a.status == b.status
    if a.optimal:
        assert a.objective == pytest.approx(b.objective, abs=1e-6)
    milp = random_milp(rng)
    a, b = solve_milp(milp, backend="bnb"), solve_milp(milp, backend="highs")
    assert a.status == b.status
    if a.optimal:
        assert a.objective == pytest.approx(b.objective, abs=1e-6)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(0.01, 100.0))
def test_objective_scaling_keeps_the_solution(seed, scale):
    lp = random_lp(np.random.default_rng(seed))
    out = solve_lp(lp)
    if not out.optimal:
        return
    scaled = LinearProgram(lp.sense, list(lp.names), [scale * c for c in lp.objective], list(lp.lower),
                           list(lp.upper), list(lp.rows), list(lp.relations), list(lp.rhs))
    out2 = solve_lp(scaled)
    assert out2.optimal
    assert out2.objective == pytest.approx(scale * out.objective, rel=1e-7, abs=1e-7)


def test_solves_are_deterministic():
    rng = np.random.default_rng(5)
    for _ in range(20):
        lp = random_lp(rng)
        a, b = solve_lp(lp), solve_lp(lp)
        assert a.status == b.status
        if a.optimal:
            assert np.array_equal(a.x, b.x)
