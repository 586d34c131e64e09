import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from dualsplit.solvers import LpProblem, SimplexSolver, solve_lp
from oracles import highs_lp


def random_lp(seed, n=None, rows=None, infeasible=False):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 7))
    rows = int(rng.integers(0, 7)) if rows is None else rows
    lb = rng.uniform(-2, 0, n)
    ub = lb + rng.uniform(0, 3, n)
    fixed = rng.random(n) < 0.15
    ub[fixed] = lb[fixed]
    C = rng.normal(size=(rows, n))
    x0 = rng.uniform(lb, ub)
    d = C @ x0 + rng.uniform(0, 1, rows)
    if infeasible and rows:
        # x0-side row and its negation with a gap
        C = np.vstack([C, C[:1], -C[:1]])
        d = np.concatenate([d, [d[0] - 5.0], [-(d[0] - 4.0)]])
    c = rng.normal(size=n)
    return LpProblem(c, C, d, lb, ub)


def test_box_only_example():
    sol = solve_lp(LpProblem([1.0, -1.0], np.zeros((0, 2)), [], [0, 0], [1, 1]))
    assert sol.optimal
    assert np.array_equal(sol.x, [0.0, 1.0])
    assert sol.objective == -1.0


def test_single_row_example():
    # min -x1 - x2  s.t. x1 + x2 <= 1, box [0, 1]^2
    sol = solve_lp(LpProblem([-1.0, -1.0], [[1.0, 1.0]], [1.0], [0, 0], [1, 1]))
    assert sol.optimal
    assert sol.objective == pytest.approx(-1.0, abs=1e-12)
    assert sol.duals[0] == pytest.approx(1.0, abs=1e-12)


def test_infeasible_example():
    sol = solve_lp(LpProblem([1.0], [[1.0], [-1.0]], [0.2, -0.5], [0.0], [1.0]))
    assert sol.status == "infeasible"


def test_rejects_unbounded_box():
    with pytest.raises(ValueError):
        LpProblem([1.0], np.zeros((0, 1)), [], [0.0], [np.inf])


@given(st.integers(0, 100_000), st.sampled_from(["bland", "dantzig"]))
def test_matches_highs(seed, rule):
    lp = random_lp(seed)
    sol = solve_lp(lp, pivot_rule=rule)
    status, x, fun, _ = highs_lp(lp.c, lp.C, lp.d, lp.lb, lp.ub)
    assert sol.status == status == "optimal"
    assert sol.objective == pytest.approx(fun, abs=1e-7 * max(1.0, abs(fun)))
    assert np.all(lp.C @ sol.x <= lp.d + 1e-8)
    assert np.all(sol.x >= lp.lb) and np.all(sol.x <= lp.ub)


@given(st.integers(0, 100_000))
def test_kkt_and_strong_duality(seed):
    lp = random_lp(seed)
    sol = solve_lp(lp)
    mu, lo, up = sol.duals, sol.lower_duals, sol.upper_duals
    assert np.all(mu >= -1e-12) and np.all(lo >= -1e-12) and np.all(up >= -1e-12)
    stat = lp.c + lp.C.T @ mu - lo + up
    assert np.max(np.abs(stat), initial=0.0) <= 1e-8
    # complementary slackness
    assert np.max(np.abs(mu * (lp.d - lp.C @ sol.x)), initial=0.0) <= 1e-8
    dual = -mu @ lp.d + lo @ lp.lb - up @ lp.ub
    assert dual == pytest.approx(sol.objective, abs=1e-7 * max(1.0, abs(sol.objective)))


@given(st.integers(0, 100_000))
def test_infeasible_detected(seed):
    lp = random_lp(seed, rows=int(np.random.default_rng(seed).integers(1, 5)), infeasible=True)
    assert solve_lp(lp).status == "infeasible"
    assert highs_lp(lp.c, lp.C, lp.d, lp.lb, lp.ub)[0] == "infeasible"


def test_deterministic_on_degenerate_objective():
    # every feasible point is optimal; repeated solves must agree bit for bit
    lp = LpProblem(np.zeros(3), [[1, 1, 1]], [1.5], np.zeros(3), np.ones(3))
    xs = [solve_lp(lp).x for _ in range(5)]
    assert all(np.array_equal(xs[0], x) for x in xs)
    assert not solve_lp(lp).unique


def test_warm_start_agrees_with_cold_start():
    lp = random_lp(11, n=5, rows=4)
    solver = SimplexSolver(lp.C, lp.d, lp.lb, lp.ub)
    rng = np.random.default_rng(0)
    for _ in range(30):
        c = rng.normal(size=5)
        warm = solver.solve(c)
        cold = solve_lp(LpProblem(c, lp.C, lp.d, lp.lb, lp.ub))
        assert warm.objective == pytest.approx(cold.objective, abs=1e-9)


def test_sparse_path_matches_highs():
    rng = np.random.default_rng(3)
    n, rows = 60, 450
    lb, ub = np.zeros(n), rng.uniform(0.5, 2, n)
    C = sp.random(rows, n, density=0.05, random_state=4, format="csr")
    x0 = rng.uniform(lb, ub)
    d = C @ x0 + rng.uniform(0, 0.5, rows)
    c = rng.normal(size=n)
    sol = solve_lp(LpProblem(c, C, d, lb, ub), pivot_rule="dantzig")
    _, _, fun, _ = highs_lp(c, C.toarray(), d, lb, ub)
    assert sol.objective == pytest.approx(fun, abs=1e-7)


def test_min_x_on_unit_interval():
    sol = solve_lp(LpProblem([1.0], np.zeros((0, 1)), [], [0.0], [1.0]))
    assert sol.x[0] == 0.0 and sol.objective == 0.0


def test_one_dimensional_row_dual():
    sol = solve_lp(LpProblem([-1.0], [[1.0]], [0.5], [0.0], [1.0]))
    assert sol.x[0] == pytest.approx(0.5, abs=1e-12)
    assert sol.duals[0] == pytest.approx(1.0, abs=1e-12)


def test_row_below_box_is_infeasible():
    assert solve_lp(LpProblem([1.0], [[1.0]], [-1.0], [0.0], [1.0])).status == "infeasible"
