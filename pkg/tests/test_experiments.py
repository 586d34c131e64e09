import csv
import json

import numpy as np
import pytest

from dualsplit.engine import RunConfig, run
from dualsplit.experiments import (
    CURVES_FILE,
    MULTIPLIER_FILE,
    REFERENCE_FILE,
    SUMMARY_FILE,
    TRACE_FILE,
    ExperimentError,
    ExperimentSpec,
    build_schedule,
    compare_curves,
    compare_run_dir,
    compare_sequences,
    run_experiment,
)
from dualsplit.instances import decoupled_problem, random_instance, toy_problem
from dualsplit.network import static_metropolis_schedule
from dualsplit.pev import PevConfig
from dualsplit.problem import save_problem

ARTIFACTS = {TRACE_FILE, SUMMARY_FILE, MULTIPLIER_FILE, CURVES_FILE, REFERENCE_FILE}


@pytest.fixture
def problem_file(tmp_path):
    path = tmp_path / "problem.json"
    save_problem(random_instance(4, 2, 2, seed=3), path)
    return str(path)


def test_artifacts_written(tmp_path, problem_file):
    out = tmp_path / "run"
    summary = run_experiment(ExperimentSpec(str(out), problem=problem_file, config=RunConfig(iterations=60)))
    assert {p.name for p in out.iterdir()} == ARTIFACTS
    on_disk = json.loads((out / SUMMARY_FILE).read_text())
    assert on_disk["iterations"] == 60 == summary["iterations"]
    for key in ("final_dual_disagreement", "gap_tilde", "final_viol_tilde_max",
                "near_zero_multipliers", "comparison", "spec", "schedule"):
        assert key in on_disk
    assert on_disk["spec"]["schedule_seed"] == 0
    with open(out / MULTIPLIER_FILE) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "agent", "j", "value"]
    with open(out / CURVES_FILE) as fh:
        assert next(csv.reader(fh))[:5] == ["k", "obj_hat", "obj_tilde", "viol_hat", "viol_tilde"]


def test_pev_source(tmp_path):
    out = tmp_path / "pev"
    summary = run_experiment(ExperimentSpec(str(out), pev=PevConfig(m=3, slots=4, seed=1),
                                            config=RunConfig(iterations=20)))
    assert summary["m"] == 3 and summary["p"] == 8


def test_decoupled_duals_stay_zero(tmp_path):
    path = tmp_path / "dec.json"
    save_problem(decoupled_problem(3, 2, seed=0), path)
    out = tmp_path / "run"
    run_experiment(ExperimentSpec(str(out), problem=str(path), config=RunConfig(iterations=30)))
    # every multiplier is identically zero, so no multiplier rows remain
    with open(out / MULTIPLIER_FILE) as fh:
        assert len(list(csv.reader(fh))) == 1
    summary = json.loads((out / SUMMARY_FILE).read_text())
    assert summary["final_dual_disagreement"] == 0.0


@pytest.mark.parametrize("parallel", [False, True])
def test_replay_is_byte_identical(tmp_path, problem_file, parallel):
    cfg = RunConfig(iterations=80, parallel=parallel)
    for name in ("a", "b"):
        run_experiment(ExperimentSpec(str(tmp_path / name), problem=problem_file, config=cfg))
    for f in (TRACE_FILE, MULTIPLIER_FILE, CURVES_FILE):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_failure_cleans_partial_outputs(tmp_path):
    from dualsplit.problem import CoupledProblem, make_agent

    ok = make_agent(0, [1.0], [[-1.0]], [-0.5], [0.0], [1.0])
    bad = make_agent(1, [1.0], [[-1.0]], [-0.5], [0.0], [1.0], C=[[1.0]], d=[-1.0])
    path = tmp_path / "bad.json"
    save_problem(CoupledProblem([ok, bad]), path)
    out = tmp_path / "run"
    with pytest.raises(ExperimentError, match="while"):
        run_experiment(ExperimentSpec(str(out), problem=str(path), solve_reference=False,
                                      schedule="static", config=RunConfig(iterations=5)))
    assert list(out.iterdir()) == []


def test_spec_validation(tmp_path):
    with pytest.raises(ExperimentError):
        ExperimentSpec(str(tmp_path))
    with pytest.raises(ExperimentError):
        ExperimentSpec(str(tmp_path), problem=str(tmp_path / "missing.json"))
    with pytest.raises(ExperimentError):
        ExperimentSpec(str(tmp_path), pev=PevConfig(m=2), schedule=str(tmp_path / "nope.json"))


def test_static_schedule_covers_both_groups():
    alt = build_schedule("alternating", 6, 0)
    static = build_schedule("static", 6, 0)
    union = (alt.matrix(0) > 0) | (alt.matrix(1) > 0)
    assert np.array_equal(static.matrix(0) > 0, union)


def test_compare_dormant_refresh():
    trace = run(toy_problem(), static_metropolis_schedule(np.ones((2, 2))), RunConfig(iterations=50))
    rep = compare_sequences(trace)["summary"]
    assert rep["refresh_triggered"] is False
    assert rep["curves_identical"]
    assert "note" in rep


def test_compare_window_one_records_earliest_refresh():
    prob = decoupled_problem(2, 2, seed=0)
    trace = run(prob, static_metropolis_schedule(np.ones((2, 2))), RunConfig(iterations=10, refresh_window=1))
    rep = compare_sequences(trace)["summary"]
    assert rep["refresh_iterations"] == [0, 0]


def test_compare_curves_times():
    k = np.arange(1, 6)
    obj = np.array([3.0, 1.5, 1.0, 1.2, 1.0])
    viol = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    rep = compare_curves(k, obj, obj, viol, viol, f_star=1.0, gap_tol=0.01)["summary"]
    assert rep["first_hat"] == 3 and rep["settled_hat"] == 5


def test_compare_run_dir(tmp_path, problem_file):
    out = tmp_path / "run"
    run_experiment(ExperimentSpec(str(out), problem=problem_file, config=RunConfig(iterations=40)))
    rep = compare_run_dir(out)["summary"]
    assert rep == json.loads((out / SUMMARY_FILE).read_text())["comparison"]
