import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualsplit.engine import (
    AgentState,
    RunConfig,
    StepSizeSchedule,
    dual_update,
    initialize,
    primal_average_update,
    refresh_update,
    run,
)
from dualsplit.instances import decoupled_problem, random_instance, toy_problem
from dualsplit.network import WeightSchedule, random_geometric_schedule, static_metropolis_schedule
from dualsplit.problem import ProblemError, make_agent, CoupledProblem
from dualsplit.solvers import InfeasibleLocalSet, local_argmin, solve_centralized
from oracles import project_step_numeric


# -- dual step --------------------------------------------------------------

def test_dual_update_examples():
    assert np.array_equal(dual_update([1.0, 0.0], 0.5, [-4.0, 2.0]), [0.0, 1.0])
    assert np.array_equal(dual_update([0.3, 2.0], 0.7, [0.0, 0.0]), [0.3, 2.0])
    assert np.array_equal(dual_update([0.0], 1.0, [-3.0]), [0.0])


@given(st.integers(0, 2**31))
def test_dual_update_is_proximal_maximizer(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 5))
    lhat = rng.uniform(0, 3, p) * (rng.random(p) < 0.8)
    c = float(rng.uniform(1e-3, 2))
    g = rng.normal(scale=2, size=p)
    assert np.max(np.abs(dual_update(lhat, c, g) - project_step_numeric(lhat, c, g))) <= 1e-8


# -- running average --------------------------------------------------------

def test_primal_average_examples():
    assert np.array_equal(primal_average_update([7.0], [2.0], 1.0, 1.0), [2.0])
    x = primal_average_update([0.0], [0.0], 1.0, 1.0)
    assert primal_average_update(x, [3.0], 0.5, 1.5)[0] == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(primal_average_update([0.4, 0.1], [0.4, 0.1], 0.2, 3.0), [0.4, 0.1])


def test_primal_average_rejects_nonpositive_weight_sum():
    with pytest.raises(ValueError):
        primal_average_update([0.0], [1.0], 0.0, 0.0)


def test_recursion_matches_direct_average():
    rng = np.random.default_rng(5)
    steps = StepSizeSchedule("harmonic", 1.0)
    xs = rng.uniform(-1, 1, (1000, 3))
    xhat = np.zeros(3)
    csum = 0.0
    for k in range(1000):
        csum += steps(k)
        xhat = primal_average_update(xhat, xs[k], steps(k), csum)
        c = np.array([steps(r) for r in range(k + 1)])
        direct = c @ xs[: k + 1] / c.sum()
        assert np.max(np.abs(xhat - direct)) <= 1e-12


# -- refresh ----------------------------------------------------------------

def blank_state():
    z = np.zeros(1)
    return AgentState(lam=z, mixed=z, x=z, x_hat=z.copy(), x_tilde=z.copy())


def drive_refresh(errors, window, threshold=1e-5):
    s = blank_state()
    steps = StepSizeSchedule()
    for k, err in enumerate(errors):
        c = steps(k)
        x_new = np.array([float(k)])
        s.c_sum += c
        s.x_hat = primal_average_update(s.x_hat, x_new, c, s.c_sum)
        refresh_update(s, k, x_new, c, np.array([err]), np.zeros(1), threshold, window)
    return s


def test_refresh_counter_example():
    s = drive_refresh([1.0] * 10 + [0.0] * 10, window=3)
    assert s.k_s == 12
    steps = StepSizeSchedule()
    c = np.array([steps(r) for r in range(12, 20)])
    assert s.x_tilde[0] == pytest.approx(c @ np.arange(12, 20) / c.sum(), abs=1e-12)


def test_refresh_window_one():
    assert drive_refresh([1.0] * 4 + [0.0] * 3, window=1).k_s == 4


def test_refresh_dormant():
    s = drive_refresh([1.0] * 30, window=2)
    assert s.k_s is None
    assert np.array_equal(s.x_tilde, s.x_hat)


def test_refresh_counter_resets():
    assert drive_refresh([0.0, 0.0, 1.0, 0.0, 0.0, 0.0], window=3).k_s == 5


# -- initialization ---------------------------------------------------------

def test_initialize_defaults():
    prob = random_instance(3, 2, 2, seed=2)
    state = initialize(prob, RunConfig())
    assert np.all(state.lambdas == 0.0)
    for a, s in zip(prob.agents, state.agents):
        assert np.array_equal(s.x_hat, local_argmin(a, np.zeros(2)))


def test_initialize_user_multipliers():
    prob = toy_problem()
    state = initialize(prob, RunConfig(lambda0=np.array([0.7])))
    assert np.all(state.lambdas == 0.7)
    with pytest.raises(ProblemError):
        initialize(prob, RunConfig(lambda0=np.array([-0.1])))


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(iterations=0)
    with pytest.raises(ValueError):
        RunConfig(refresh_threshold=0.0)
    with pytest.raises(ValueError):
        RunConfig(refresh_window=0)
    with pytest.raises(ValueError):
        StepSizeSchedule("custom", values=(1.0, 2.0))
    with pytest.raises(ValueError):
        StepSizeSchedule("harmonic", beta=-1.0)


# -- runs -------------------------------------------------------------------

def test_decoupled_run_freezes_multipliers():
    prob = decoupled_problem(3, 2, seed=0)
    sched = random_geometric_schedule(3, 0)
    trace = run(prob, sched, RunConfig(iterations=50))
    assert np.all(trace.lambdas == 0.0)
    best = [local_argmin(a, np.zeros(prob.p)) for a in prob.agents]
    for xh, xb in zip(trace.x_hat, best):
        assert np.array_equal(xh, xb)
    ref = solve_centralized(prob)
    assert np.allclose(trace.obj_hat, ref.f_star, atol=1e-12)


def scalar_subgradient(iterations, beta=1.0):
    """Classical dual subgradient method on min x s.t. 1 - x <= 0, x in [0, 1]."""
    lam, out = 0.0, []
    for k in range(iterations):
        x = 1.0 if 1.0 - lam < 0 else 0.0
        lam = max(0.0, lam + beta / (k + 1) * (1.0 - x))
        out.append(lam)
    return np.array(out)


def test_single_agent_matches_scalar_reference():
    prob = toy_problem(m=1)
    sched = WeightSchedule(1, 1.0, 1, matrices=(np.ones((1, 1)),))
    trace = run(prob, sched, RunConfig(iterations=300))
    assert np.array_equal(trace.lambdas[1:, 0, 0], scalar_subgradient(300))
    assert np.all(trace.dual_disagreement == 0.0)


def test_toy_multipliers_converge(toy, toy_schedule):
    trace = run(toy, toy_schedule, RunConfig(iterations=5000))
    assert np.max(np.abs(trace.lambdas[-1] - 1.0)) <= 1e-2


@pytest.mark.parametrize("quadratic", [False, True])
def test_invariants_along_run(quadratic):
    prob = random_instance(4, 3, 2, seed=3, quadratic=quadratic)
    trace = run(prob, random_geometric_schedule(4, 1),
                RunConfig(iterations=200, keep_primal_history=True, refresh_window=1, refresh_threshold=1e-2))
    assert np.all(trace.lambdas >= 0.0)
    assert np.all(np.isfinite(trace.obj_hat)) and len(trace) == 200
    for t in range(len(trace)):
        for hist in (trace.x_hat_history, trace.x_tilde_history):
            for a, xi in zip(prob.agents, prob.split(hist[t])):
                assert a.feasible.contains(xi, tol=1e-8)


def test_parallel_trace_identical():
    prob = random_instance(5, 3, 2, seed=1)
    sched = random_geometric_schedule(5, 0)
    a = run(prob, sched, RunConfig(iterations=120))
    b = run(prob, sched, RunConfig(iterations=120, parallel=True, workers=3))
    assert a.to_csv() == b.to_csv()
    assert np.array_equal(a.lambdas, b.lambdas)


def test_custom_step_sizes():
    vals = tuple(0.5 / (k + 1) for k in range(40))
    trace = run(toy_problem(), static_metropolis_schedule(np.ones((2, 2))),
                RunConfig(iterations=40, step_size=StepSizeSchedule("custom", values=vals)))
    assert np.array_equal(trace.c, vals)
    with pytest.raises(IndexError):
        run(toy_problem(), static_metropolis_schedule(np.ones((2, 2))),
            RunConfig(iterations=41, step_size=StepSizeSchedule("custom", values=vals)))


def test_infeasible_agent_reports_id_and_round():
    ok = make_agent(0, [1.0], [[-1.0]], [-0.5], [0.0], [1.0])
    bad = make_agent(1, [1.0], [[-1.0]], [-0.5], [0.0], [1.0], C=[[1.0]], d=[-1.0])
    with pytest.raises(InfeasibleLocalSet) as info:
        run(CoupledProblem([ok, bad]), static_metropolis_schedule(np.ones((2, 2))), RunConfig(iterations=3))
    assert info.value.agent_id == 1


def test_schedule_size_mismatch():
    with pytest.raises(ValueError):
        run(toy_problem(), random_geometric_schedule(3, 0), RunConfig(iterations=2))


def test_stop_early():
    prob = decoupled_problem(2, 2, seed=0)
    trace = run(prob, static_metropolis_schedule(np.ones((2, 2))),
                RunConfig(iterations=100, stop_early=True, refresh_window=2))
    assert len(trace) == 2
    assert trace.k_s == [1, 1]


def test_trace_csv_columns(toy, toy_schedule):
    text = run(toy, toy_schedule, RunConfig(iterations=3)).to_csv()
    header = text.splitlines()[0].split(",")
    assert header[:8] == ["k", "obj_hat", "obj_tilde", "viol_hat_max", "viol_tilde_max",
                          "dual_disagreement", "dual_dist_to_ref", "sum_e_sq"]
    assert len(text.splitlines()) == 4
