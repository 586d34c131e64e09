import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualsplit.assumptions import (
    SLATER_TOL,
    check_slater,
    compute_g_bound,
    slater_margins,
    validate_problem,
)
from dualsplit.instances import decoupled_problem, random_instance, toy_problem
from dualsplit.pev import PevConfig, generate_pev
from dualsplit.problem import CoupledProblem, make_agent


def test_toy_slater_holds_with_valid_witness():
    holds, witness = check_slater(toy_problem())
    assert holds
    # any strictly interior point with x1 + x2 >= 1 is a valid witness
    assert np.all(witness > 0) and np.all(witness < 1)
    assert witness.sum() >= 1.0 - 1e-12


def test_slater_fails_when_coupling_needs_the_boundary():
    # 1 - x1 <= 0 with x1 in [0, 0.5] cannot be met at all
    agents = [make_agent(0, [0.0], [[-1.0]], [-1.0], [0.0], [0.5])]
    assert not check_slater(CoupledProblem(agents)).holds


def test_slater_tight_boundary_is_not_strict():
    # 1 - x1 <= 0 with x1 in [0, 1] is met only on the box boundary
    agents = [make_agent(0, [0.0], [[-1.0]], [-1.0], [0.0], [1.0])]
    assert not check_slater(CoupledProblem(agents)).holds


def test_slater_vacuous_without_coupling():
    agents = [make_agent(0, [1.0], np.zeros((0, 1)), [], [0.0], [1.0])]
    assert check_slater(CoupledProblem(agents, p=0)).holds


@given(st.integers(0, 100_000))
def test_witness_satisfies_own_certificate(seed):
    prob = random_instance(3, 2, 2, seed=seed % 50)
    res = check_slater(prob)
    assert res.holds
    marg = slater_margins(prob, res.witness)
    assert marg["coupling_max"] <= 1e-9
    assert marg["box_margin"] > SLATER_TOL * 0.5
    assert marg["row_margin"] > SLATER_TOL * 0.5


def test_g_bound_examples():
    one = CoupledProblem([make_agent(0, [0.0], [[1.0]], [0.0], [0.0], [1.0])])
    assert compute_g_bound(one).G == pytest.approx(1.0)
    two = CoupledProblem([make_agent(0, [0.0], [[1.0], [-1.0]], [0.0, 0.0], [0.0], [1.0])])
    assert compute_g_bound(two).G == pytest.approx(np.sqrt(2.0))
    const = CoupledProblem([make_agent(0, [0.0], [[0.0]], [5.0], [0.0], [1.0])])
    assert compute_g_bound(const).G == pytest.approx(5.0)


@given(st.integers(0, 100_000))
def test_g_bound_dominates_sampled_points(seed):
    rng = np.random.default_rng(seed)
    prob = random_instance(3, 3, 2, seed=seed % 50)
    G = compute_g_bound(prob).G
    for a in prob.agents:
        poly = a.feasible
        for _ in range(50):
            x = rng.uniform(poly.lb, poly.ub)
            if poly.contains(x):
                assert np.linalg.norm(a.coupling.A @ x - a.coupling.b) <= G + 1e-9


def test_validate_reports():
    rep = validate_problem(toy_problem())
    # g_i = 0.5 - x_i on [0, 1]
    assert rep.ok and rep.G == pytest.approx(0.5)
    assert validate_problem(decoupled_problem(2, 2)).ok
    empty = make_agent(0, [1.0], [[1.0]], [0.0], [0.0], [1.0], C=[[1.0]], d=[-1.0])
    bad = validate_problem(CoupledProblem([empty]))
    assert not bad.ok and not bad.nonempty_ok


def test_pev_passes_validators():
    assert validate_problem(generate_pev(PevConfig(m=4, slots=6, seed=2))).ok
