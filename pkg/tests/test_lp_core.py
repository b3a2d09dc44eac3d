import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from msot import _backend
from msot.errors import (InfeasibleSupportError, IterationLimitError, TransportError,
                         UnbalancedError)
from msot.grid import Mask, build_grid
from msot.lp_core import (Plan, SolverOptions, SupportSet, certify, read_plan, solve_full,
                          solve_partial, solve_partial_arrays, solve_sparse, solve_transport,
                          verify_optimality, write_plan)
from msot.measure import CostSpec, DiscreteMeasure, dirac_measure, discretize

from oracles import assignment_brute_force, enumerate_vertices, partial_by_enumeration


def dense_arcs(n, m):
    return np.repeat(np.arange(n), m), np.tile(np.arange(m), n)


def solve_matrix(a, b, C, **kw):
    rows, cols = dense_arcs(len(a), len(b))
    return solve_transport(np.asarray(a, float), np.asarray(b, float), rows, cols,
                           np.asarray(C, float).ravel(), **kw)


def line_measure(weights, lo=-0.5, h=1.0):
    g = build_grid(Mask.box([lo], [lo + h * len(weights)]), h)
    return DiscreteMeasure(g, np.asarray(weights, float))


def random_problem(rng, n, m):
    a = rng.random(n) + 0.05
    b = rng.random(m) + 0.05
    a /= a.sum()
    b = b / b.sum()
    b *= a.sum() / b.sum()
    return a, b, rng.random((n, m))


# -- solve_full --------------------------------------------------------------

def test_dirac_to_dirac_single_entry():
    mu = dirac_measure(build_grid(Mask.box([0], [1]), 0.25), 1)
    nu = dirac_measure(build_grid(Mask.box([0], [1]), 0.25), 3)
    plan = solve_full(mu, nu, CostSpec(2))
    assert plan.entries == [(1, 3, 1.0)]
    assert plan.objective == pytest.approx(0.25, abs=1e-15)


def test_uniform_two_points_identity():
    mu = line_measure([0.5, 0.5])
    plan = solve_full(mu, mu, CostSpec(2))
    assert plan.entries == [(0, 0, 0.5), (1, 1, 0.5)]
    assert plan.objective == 0.0


def test_three_by_three_matches_vertex_enumeration():
    a, b = [0.2, 0.3, 0.5], [0.4, 0.4, 0.2]
    C = [[(i - j) ** 2 for j in range(3)] for i in range(3)]
    best, _ = enumerate_vertices(a, b, C)
    plan = solve_matrix(a, b, C)
    assert plan.objective == pytest.approx(best, abs=1e-12)
    rows, cols = dense_arcs(3, 3)
    cert = certify(plan, a, b, rows, cols, np.ravel(C))
    assert cert.ok
    assert abs(cert.dual_objective - best) <= 1e-9


def test_unbalanced_rejected():
    with pytest.raises(UnbalancedError):
        solve_matrix([0.5, 0.5], [0.5, 0.6], np.zeros((2, 2)))


def test_iteration_limit_carries_plan():
    rng = np.random.default_rng(3)
    a, b, C = random_problem(rng, 12, 12)
    with pytest.raises(IterationLimitError) as info:
        solve_matrix(a, b, C, options=SolverOptions(max_iter=1))
    plan = info.value.plan
    assert isinstance(plan, Plan)
    np.testing.assert_allclose(plan.row_sums(), a, atol=1e-12)


def test_zero_weight_cells_are_dropped():
    mu = line_measure([0.5, 0.0, 0.5])
    nu = line_measure([0.0, 1.0, 0.0])
    plan = solve_full(mu, nu, CostSpec(2))
    assert sorted(plan.entries) == [(0, 1, 0.5), (2, 1, 0.5)]
    assert np.isnan(plan.u[1]) and np.isnan(plan.v[0])


# -- solve_sparse ------------------------------------------------------------

def test_sparse_with_all_pairs_equals_full():
    d = Mask.box([0, 0], [1, 1])
    g = build_grid(d, 0.25)
    mu = discretize(lambda p: 1 + p[:, 0], g)
    nu = discretize(lambda p: 1 + p[:, 1] ** 2, g)
    full = solve_full(mu, nu, CostSpec(2))
    sparse = solve_sparse(mu, nu, CostSpec(2), SupportSet.full(len(g), len(g)))
    assert sparse.objective == pytest.approx(full.objective, rel=0, abs=1e-10)


def test_sparse_diagonal_support_is_forced():
    mu = line_measure([0.5, 0.5])
    sup = SupportSet.from_pairs([0, 1], [0, 1], 2, 2)
    plan = solve_sparse(mu, mu, CostSpec(2), sup)
    assert plan.entries == [(0, 0, 0.5), (1, 1, 0.5)]


def test_sparse_missing_row_is_infeasible():
    mu = line_measure([0.5, 0.5])
    sup = SupportSet.from_pairs([1, 1], [0, 1], 2, 2)
    with pytest.raises(InfeasibleSupportError):
        solve_sparse(mu, mu, CostSpec(2), sup)


def test_support_set_operations():
    s = SupportSet.from_pairs([2, 0, 2], [1, 3, 1], 3, 4)
    assert len(s) == 2 and s.pairs() == {(0, 3), (2, 1)}
    np.testing.assert_array_equal(s.contains([0, 2, 1], [3, 1, 1]), [True, True, False])
    u = s.union(SupportSet.from_pairs([1], [1], 3, 4))
    assert len(u) == 3
    with pytest.raises(IndexError):
        SupportSet.from_pairs([3], [0], 3, 4)


# -- partial -----------------------------------------------------------------

def test_partial_full_mass_equals_balanced():
    rng = np.random.default_rng(5)
    a, b, C = random_problem(rng, 6, 7)
    rows, cols = dense_arcs(6, 7)
    bal = solve_matrix(a, b, C)
    part = solve_partial_arrays(a, b, a.sum(), rows, cols, C.ravel())
    assert part.partial
    assert part.objective == pytest.approx(bal.objective, abs=1e-8)


def test_partial_free_overlap():
    mu = line_measure([0.6, 0.4])
    nu = line_measure([0.5, 0.5])
    plan = solve_partial(mu, nu, CostSpec(2), 0.5)
    assert plan.objective == 0.0
    assert plan.total() == pytest.approx(0.5, abs=1e-15)


def test_partial_four_by_four_matches_enumeration():
    rng = np.random.default_rng(11)
    a, b, C = random_problem(rng, 4, 4)
    best, _ = partial_by_enumeration(a, b, C, 0.7)
    rows, cols = dense_arcs(4, 4)
    plan = solve_partial_arrays(a, b, 0.7, rows, cols, C.ravel())
    assert plan.objective == pytest.approx(best, abs=1e-9)
    assert np.all(plan.row_sums() <= a + 1e-12) and np.all(plan.col_sums() <= b + 1e-12)


def test_partial_mass_out_of_range():
    mu = line_measure([0.5, 0.5])
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            solve_partial(mu, mu, CostSpec(2), bad)


# -- certificates ------------------------------------------------------------

def test_verify_optimality_on_full_solve():
    g = build_grid(Mask.box([0, 0], [1, 1]), 0.125)
    mu = discretize(lambda p: 1 + np.sin(3 * p[:, 0]), g)
    nu = discretize(lambda p: 1 + p[:, 1], g)
    plan = solve_full(mu, nu, CostSpec(2))
    cert = verify_optimality(plan, mu, nu, CostSpec(2))
    assert cert.ok
    assert cert.feasibility <= 1e-8 and cert.dual_infeasibility <= 1e-8
    assert cert.complementary_slackness <= 1e-8
    assert cert.pairs_checked == len(g) ** 2


def test_perturbed_plan_reports_feasibility_residual():
    g = build_grid(Mask.box([0, 0], [1, 1]), 0.25)
    mu = discretize(lambda p: 1 + p[:, 0], g)
    plan = solve_full(mu, mu, CostSpec(2))
    bumped = Plan(plan.rows, plan.cols, plan.mass.copy(), plan.objective, plan.u, plan.v,
                  plan.n, plan.m)
    bumped.mass[0] += 1e-3
    cert = verify_optimality(bumped, mu, mu, CostSpec(2))
    assert cert.feasibility == pytest.approx(1e-3, rel=1e-9)
    assert not cert.ok


def test_certificate_requires_duals():
    mu = line_measure([1.0])
    plan = Plan(np.array([0]), np.array([0]), np.array([1.0]), 0.0, None, None, 1, 1)
    with pytest.raises(TransportError):
        verify_optimality(plan, mu, mu)


# -- plan files --------------------------------------------------------------

def test_plan_file_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    a, b, C = random_problem(rng, 5, 4)
    plan = solve_matrix(a, b, C)
    write_plan(tmp_path / "p.coo", plan)
    text = (tmp_path / "p.coo").read_text().splitlines()
    assert text[0].split()[:4] == ["PLAN", "5", "4", str(plan.nnz)]
    back = read_plan(tmp_path / "p.coo")
    np.testing.assert_array_equal(back.rows, plan.rows)
    np.testing.assert_array_equal(back.mass, plan.mass)
    assert back.objective == plan.objective


# -- properties --------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2 ** 32 - 1))
def test_permutation_recovery(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((n, 2)), rng.random((n, 2))
    C = CostSpec(2).matrix(x, y)
    best, _ = assignment_brute_force(C)
    w = np.full(n, 1.0 / n)
    plan = solve_matrix(w, w, C)
    assert plan.objective == pytest.approx(best, abs=1e-12)
    # vertices of the Birkhoff polytope are scaled permutations
    assert plan.nnz == n
    assert sorted(plan.rows.tolist()) == list(range(n))
    assert sorted(plan.cols.tolist()) == list(range(n))
    np.testing.assert_allclose(plan.mass, 1.0 / n, rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 7), seed=st.integers(0, 2 ** 32 - 1))
def test_equal_weights_up_to_seven_match_permutation_vertices(n, seed):
    # vertices of the Birkhoff polytope are the permutation matrices
    rng = np.random.default_rng(seed)
    C = rng.random((n, n))
    best, _ = assignment_brute_force(C)
    w = np.full(n, 1.0 / n)
    assert solve_matrix(w, w, C).objective == pytest.approx(best, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 3), m=st.integers(1, 4), seed=st.integers(0, 2 ** 32 - 1))
def test_small_instances_match_vertex_enumeration(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b, C = random_problem(rng, n, m)
    best, _ = enumerate_vertices(a, b, C)
    assert solve_matrix(a, b, C).objective == pytest.approx(best, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 15), m=st.integers(2, 15), seed=st.integers(0, 2 ** 32 - 1),
       alpha=st.floats(0.01, 100))
def test_scaling_covariance(n, m, seed, alpha):
    rng = np.random.default_rng(seed)
    a, b, C = random_problem(rng, n, m)
    p1 = solve_matrix(a, b, C)
    p2 = solve_matrix(a, b, alpha * C)
    assert p2.objective == pytest.approx(alpha * p1.objective, rel=1e-12)
    assert p1.support().pairs() == p2.support().pairs()


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 20), m=st.integers(1, 20), seed=st.integers(0, 2 ** 32 - 1),
       pricing=st.sampled_from(["block", "dantzig"]), start=st.sampled_from(["mincost",
                                                                             "northwest"]))
def test_basic_solution_bound(n, m, seed, pricing, start):
    rng = np.random.default_rng(seed)
    a, b, C = random_problem(rng, n, m)
    plan = solve_matrix(a, b, C, options=SolverOptions(pricing=pricing, start=start))
    assert plan.nnz <= n + m - 1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 8), m=st.integers(2, 8), seed=st.integers(0, 2 ** 32 - 1))
def test_partial_objective_monotone_in_mass(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b, C = random_problem(rng, n, m)
    rows, cols = dense_arcs(n, m)
    objs = [solve_partial_arrays(a, b, f * a.sum(), rows, cols, C.ravel()).objective
            for f in (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)]
    assert all(y >= x - 1e-15 for x, y in zip(objs, objs[1:]))


@pytest.mark.parametrize("h", [0.25, 0.125, 0.0625])
def test_translation_exactness(h):
    mu = discretize(lambda p: np.ones(len(p)), build_grid(Mask.box([0, 0], [1, 1]), h))
    nu = discretize(lambda p: np.ones(len(p)),
                    build_grid(Mask.box([0.5, 0.25], [1.5, 1.25]), h))
    plan = solve_full(mu, nu, CostSpec(2))
    assert abs(plan.objective - 0.3125) <= 1e-10


@pytest.mark.skipif("cython" not in _backend.BACKENDS, reason="compiled kernel not built")
@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), m=st.integers(1, 12), seed=st.integers(0, 2 ** 32 - 1),
       pricing=st.sampled_from(["block", "dantzig"]), start=st.sampled_from(["mincost",
                                                                             "northwest"]),
       sparsity=st.floats(0.3, 1.0))
def test_backends_bit_identical(n, m, seed, pricing, start, sparsity):
    rng = np.random.default_rng(seed)
    a, b, C = random_problem(rng, n, m)
    # integer-ish costs create ties and degenerate pivots
    C = np.round(C * 4)
    rows, cols = dense_arcs(n, m)
    keep = rng.random(len(rows)) < sparsity
    keep[np.arange(min(n, m)) * m + np.arange(min(n, m))] = True
    rows, cols, costs = rows[keep], cols[keep], C.ravel()[keep]
    out = {}
    for backend in ("cython", "python"):
        opts = SolverOptions(pricing=pricing, start=start, backend=backend)
        try:
            plan = solve_transport(a, b, rows, cols, costs, opts)
            out[backend] = (plan.rows.tolist(), plan.cols.tolist(), plan.mass.tobytes(),
                            plan.u.tobytes(), plan.v.tobytes(), plan.iterations)
        except InfeasibleSupportError:
            out[backend] = "infeasible"
    assert out["cython"] == out["python"]
    assume(out["cython"] != "infeasible")
