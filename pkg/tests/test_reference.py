import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualsplit.instances import decoupled_problem, random_instance, toy_problem
from dualsplit.pev import PevConfig, generate_pev
from dualsplit.problem import CoupledProblem, make_agent
from dualsplit.solvers import (
    InfeasibleProblem,
    brute_force_reference,
    eval_dual_function,
    solve_centralized,
)
from dualsplit.solvers.reference import grid_axes
from oracles import central_highs


def test_toy_optimum():
    ref = solve_centralized(toy_problem())
    assert ref.f_star == pytest.approx(1.0, abs=1e-12)
    assert ref.lambda_star[0] == pytest.approx(1.0, abs=1e-12)
    assert sum(ref.x_star) == pytest.approx(1.0, abs=1e-12)


def test_decoupled_multiplier_is_zero():
    prob = decoupled_problem(3, 2, seed=1)
    ref = solve_centralized(prob)
    assert np.all(ref.lambda_star == 0.0)
    _, fun, _ = central_highs(prob)
    assert ref.f_star == pytest.approx(fun, abs=1e-10)


def test_infeasible_coupling_raises():
    agents = [make_agent(i, [1.0], [[-1.0]], [-1.0], [0.0], [0.2]) for i in range(2)]
    with pytest.raises(InfeasibleProblem):
        solve_centralized(CoupledProblem(agents))


@pytest.mark.parametrize("seed", range(4))
def test_tiny_pev_against_highs_and_grid(seed):
    prob = generate_pev(PevConfig(m=3, slots=2, seed=seed))
    ref = solve_centralized(prob)
    x, fun, lam = central_highs(prob)
    assert ref.f_star == pytest.approx(fun, rel=1e-9)
    assert prob.violation(ref.blocks(prob)).max() <= 1e-9
    # lattice points are feasible, so the grid optimum can only be worse;
    # a coarse lattice may also miss the thin feasible set entirely
    try:
        grid = brute_force_reference(prob, 0.0008)
    except InfeasibleProblem:
        return
    assert grid.f_star >= ref.f_star - 1e-12


@given(st.integers(0, 100_000), st.booleans())
def test_saddle_point(seed, quadratic):
    prob = random_instance(3, 2, 2, seed=seed % 17, quadratic=quadratic)
    ref = solve_centralized(prob)
    lam = ref.lambda_star
    xs = ref.blocks(prob)
    g = prob.coupling(xs)
    assert np.all(lam >= 0)
    assert np.all(g <= 1e-9)
    assert abs(lam @ g) <= 1e-8
    dual = sum(eval_dual_function(a, lam)[0] for a in prob.agents)
    assert dual == pytest.approx(ref.f_star, abs=1e-7 * max(1.0, abs(ref.f_star)))


@given(st.integers(0, 100_000))
def test_lp_matches_highs(seed):
    prob = random_instance(4, 2, 3, seed=seed)
    _, fun, _ = central_highs(prob)
    assert solve_centralized(prob).f_star == pytest.approx(fun, abs=1e-8 * max(1.0, abs(fun)))


def test_brute_force_toy():
    ref = brute_force_reference(toy_problem(), 0.01)
    assert abs(ref.f_star - 1.0) <= 0.01
    assert ref.lambda_star is None


def test_brute_force_empty_set():
    agents = [make_agent(i, [1.0], [[-1.0]], [-1.0], [0.0], [0.2]) for i in range(2)]
    with pytest.raises(InfeasibleProblem):
        brute_force_reference(CoupledProblem(agents), 0.05)


def test_brute_force_limits():
    with pytest.raises(ValueError):
        brute_force_reference(random_instance(5, 2, 1, seed=0), 0.5)
    with pytest.raises(ValueError):
        brute_force_reference(random_instance(3, 2, 1, seed=0), 1e-3)
    with pytest.raises(ValueError):
        grid_axes(toy_problem(), 0.0)


def test_grid_axes_include_endpoints():
    axes = grid_axes(toy_problem(), 0.3)
    assert axes[0][0] == 0.0 and axes[0][-1] == 1.0
    assert np.max(np.diff(axes[0])) <= 0.3
