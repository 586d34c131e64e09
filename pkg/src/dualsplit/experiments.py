"""Experiment orchestration and persisted artifacts."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import RunConfig, RunTrace, run
from .network import WeightSchedule, load_schedule, random_geometric_schedule, static_metropolis_schedule
from .pev import PevConfig, generate_pev
from .problem import CoupledProblem, load_problem
from .solvers.reference import CentralizedReference, solve_centralized

TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary.json"
MULTIPLIER_FILE = "multipliers.csv"
CURVES_FILE = "curves.csv"
REFERENCE_FILE = "reference.json"


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    """Where the problem and schedule come from, how to run, where to write.

    ``problem`` is a JSON path or ``None`` to draw a PEV instance from
    ``pev``. ``schedule`` is ``"alternating"`` (a random geometric graph
    whose edges alternate in two groups, seeded by ``schedule_seed``),
    ``"static"`` (the union of both groups, every round) or a JSON path.
    """

    out_dir: str
    problem: str | None = None
    pev: PevConfig | None = None
    schedule: str = "alternating"
    schedule_seed: int = 0
    config: RunConfig = field(default_factory=RunConfig)
    solve_reference: bool = True
    multiplier_stride: int = 1

    def __post_init__(self):
        if self.problem is None and self.pev is None:
            raise ExperimentError("give a problem file or a PEV configuration")
        if self.problem is not None and not os.path.isfile(self.problem):
            raise ExperimentError(f"problem file {self.problem!r} does not exist")
        if self.schedule not in ("alternating", "static") and not os.path.isfile(self.schedule):
            raise ExperimentError(f"schedule file {self.schedule!r} does not exist")
        if self.multiplier_stride < 1:
            raise ExperimentError("multiplier_stride must be at least 1")

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "pev": None if self.pev is None else self.pev.to_dict(),
            "schedule": self.schedule,
            "schedule_seed": self.schedule_seed,
            "config": self.config.to_dict(),
            "solve_reference": self.solve_reference,
        }


def build_schedule(kind: str, m: int, seed: int = 0) -> WeightSchedule:
    if kind == "alternating":
        return random_geometric_schedule(m, seed)
    if kind == "static":
        sched = random_geometric_schedule(m, seed)
        adj = np.zeros((m, m), dtype=bool)
        for M in sched.matrices:
            adj |= M > 0
        return static_metropolis_schedule(adj)
    return load_schedule(kind)


def reference_to_dict(ref: CentralizedReference) -> dict:
    return {
        "f_star": ref.f_star,
        "x_star": ref.x_star.tolist(),
        "lambda_star": None if ref.lambda_star is None else ref.lambda_star.tolist(),
        "unique": ref.unique,
    }


def reference_from_dict(data: dict) -> CentralizedReference:
    lam = data.get("lambda_star")
    return CentralizedReference(
        np.asarray(data["x_star"], dtype=float),
        None if lam is None else np.asarray(lam, dtype=float),
        float(data["f_star"]),
        bool(data.get("unique", False)),
    )


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_multipliers(trace: RunTrace, path, stride: int = 1) -> None:
    """Long-format ``k, agent, j, value`` table of every agent's multipliers.

    Rows whose multiplier stays exactly zero for every agent and iteration
    are omitted, since they would only repeat zeros.
    """
    active = np.flatnonzero(np.any(trace.lambdas != 0.0, axis=(0, 1)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "agent", "j", "value"])
        for k in range(0, trace.lambdas.shape[0], stride):
            L = trace.lambdas[k]
            for i in range(trace.m):
                for j in active:
                    w.writerow([k, i, int(j), _fmt(L[i, j])])


def write_curves(trace: RunTrace, path) -> None:
    """Objective and violation of both primal sequences, one row per iteration."""
    ref = trace.reference
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "obj_hat", "obj_tilde", "viol_hat", "viol_tilde", "gap_hat", "gap_tilde"])
        for t in range(len(trace)):
            gh = gt = float("nan")
            if ref is not None:
                gh = abs(trace.obj_hat[t] - ref.f_star)
                gt = abs(trace.obj_tilde[t] - ref.f_star)
            w.writerow([
                int(trace.k[t]), _fmt(trace.obj_hat[t]), _fmt(trace.obj_tilde[t]),
                _fmt(trace.viol_hat_max[t]), _fmt(trace.viol_tilde_max[t]), _fmt(gh), _fmt(gt),
            ])


def load_experiment_problem(spec: ExperimentSpec) -> CoupledProblem:
    if spec.problem is not None:
        return load_problem(spec.problem)
    return generate_pev(spec.pev)


def run_experiment(spec: ExperimentSpec) -> dict:
    """Run one experiment and write its artifacts into ``spec.out_dir``.

    Returns the summary dictionary. On any failure the files this call
    created are removed and the error is re-raised with context.
    """
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []

    def target(name: str) -> Path:
        path = out / name
        created.append(path)
        return path

    stage = "loading the problem"
    try:
        problem = load_experiment_problem(spec)
        stage = "building the schedule"
        schedule = build_schedule(spec.schedule, problem.m, spec.schedule_seed)
        ref = None
        if spec.solve_reference:
            stage = "solving the centralized reference"
            ref = solve_centralized(problem)
            with open(target(REFERENCE_FILE), "w") as fh:
                json.dump(reference_to_dict(ref), fh, indent=1)
        stage = "running the distributed iteration"
        trace = run(problem, schedule, spec.config, reference=ref)
        stage = "writing artifacts"
        trace.to_csv(target(TRACE_FILE))
        write_multipliers(trace, target(MULTIPLIER_FILE), spec.multiplier_stride)
        write_curves(trace, target(CURVES_FILE))
        summary = trace.summary()
        summary["comparison"] = compare_sequences(trace)["summary"]
        summary["spec"] = spec.to_dict()
        summary["schedule"] = {"eta": schedule.eta, "T": schedule.T, "period": schedule.period}
        if ref is not None:
            summary["lambda_star"] = ref.lambda_star.tolist()
        with open(target(SUMMARY_FILE), "w") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
        return summary
    except Exception as exc:
        for path in created:
            if path.exists():
                path.unlink()
        raise ExperimentError(f"experiment failed while {stage}: {exc}") from exc


def _first(mask: np.ndarray, k: np.ndarray):
    hit = np.flatnonzero(mask)
    return None if hit.size == 0 else int(k[hit[0]])


def _settled(mask: np.ndarray, k: np.ndarray):
    if mask.size == 0 or not mask[-1]:
        return None
    bad = np.flatnonzero(~mask)
    return int(k[0]) if bad.size == 0 else int(k[bad[-1] + 1])


def compare_curves(k, obj_hat, obj_tilde, viol_hat, viol_tilde, f_star=None,
                   viol_tol: float = 1e-3, gap_tol: float = 1e-2, k_s=None) -> dict:
    """Time-to-tolerance of the plain and restarted running averages.

    A sequence meets the tolerance at ``k`` when its violation is at most
    ``viol_tol`` and, if ``f_star`` is known, its relative objective gap is
    at most ``gap_tol``. Both the first such ``k`` and the ``k`` from which
    the tolerance holds to the end of the run are reported.
    """
    k = np.asarray(k)
    res = {}
    scale = 1.0 if f_star is None or f_star == 0 else abs(f_star)
    for name, obj, viol in (("hat", obj_hat, viol_hat), ("tilde", obj_tilde, viol_tilde)):
        ok = np.asarray(viol) <= viol_tol
        if f_star is not None:
            ok &= np.abs(np.asarray(obj) - f_star) / scale <= gap_tol
        res[name] = {"first": _first(ok, k), "settled": _settled(ok, k)}
    triggered = None if k_s is None else any(x is not None for x in k_s)
    identical = bool(np.array_equal(obj_hat, obj_tilde) and np.array_equal(viol_hat, viol_tilde))
    summary = {
        "refresh_triggered": triggered,
        "refresh_iterations": None if k_s is None else list(k_s),
        "curves_identical": identical,
        "first_hat": res["hat"]["first"],
        "first_tilde": res["tilde"]["first"],
        "settled_hat": res["hat"]["settled"],
        "settled_tilde": res["tilde"]["settled"],
        "viol_tol": viol_tol,
        "gap_tol": gap_tol,
    }
    if triggered is False:
        summary["note"] = "refresh never triggered; the two sequences coincide"
    return {"summary": summary}


def compare_sequences(trace: RunTrace, viol_tol: float = 1e-3, gap_tol: float = 1e-2) -> dict:
    """Compare the plain and restarted averages of a run (see :func:`compare_curves`)."""
    f_star = None if trace.reference is None else trace.reference.f_star
    rep = compare_curves(
        trace.k, trace.obj_hat, trace.obj_tilde, trace.viol_hat_max, trace.viol_tilde_max,
        f_star, viol_tol, gap_tol, [None if x is None else int(x) for x in trace.k_s],
    )
    rep["curves"] = {
        "k": trace.k,
        "obj_hat": trace.obj_hat,
        "obj_tilde": trace.obj_tilde,
        "viol_hat": trace.viol_hat_max,
        "viol_tilde": trace.viol_tilde_max,
    }
    return rep


def compare_run_dir(run_dir, viol_tol: float = 1e-3, gap_tol: float = 1e-2) -> dict:
    """:func:`compare_curves` on the curves file of a finished experiment."""
    run_dir = Path(run_dir)
    data = np.genfromtxt(run_dir / CURVES_FILE, delimiter=",", names=True)
    data = np.atleast_1d(data)
    f_star, k_s = None, None
    summary_path = run_dir / SUMMARY_FILE
    if summary_path.exists():
        with open(summary_path) as fh:
            s = json.load(fh)
        f_star = s.get("f_star")
        k_s = s.get("refresh_iterations")
    return compare_curves(
        data["k"].astype(int), data["obj_hat"], data["obj_tilde"], data["viol_hat"],
        data["viol_tilde"], f_star, viol_tol, gap_tol, k_s,
    )
