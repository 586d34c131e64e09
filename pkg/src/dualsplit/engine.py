"""
Synchronous-rounds engine for distributed dual decomposition with proximal
dual updates.

One round ``k`` does, for every agent ``i``:

1. mix the neighbours' multipliers, ``lhat_i = sum_j a_ij(k) lambda_j(k)``;
2. minimize the local Lagrangian at ``lhat_i`` to get ``x_i(k+1)``;
3. take the projected step ``lambda_i(k+1) = [lhat_i + c(k) g_i(x_i(k+1))]_+``;
4. fold ``x_i(k+1)`` into the running average ``xhat_i`` and the restarted
   average ``xtilde_i``.

The mixing step of every agent reads the iteration-``k`` multipliers before
any agent writes iteration ``k+1``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import WeightSchedule, mix
from .problem import CoupledProblem, ProblemError, eval_coupling, eval_local_lagrangian, eval_objective
from .solvers.local import ExactOracle, InfeasibleLocalSet
from .solvers.reference import CentralizedReference

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "k",
    "obj_hat",
    "obj_tilde",
    "viol_hat_max",
    "viol_tilde_max",
    "dual_disagreement",
    "dual_dist_to_ref",
    "sum_e_sq",
)


@dataclass(frozen=True)
class StepSizeSchedule:
    """Positive non-increasing step sizes ``c(k)``.

    ``kind="harmonic"`` gives ``c(k) = beta / (k + 1)``; ``kind="custom"``
    reads ``values[k]``.
    """

    kind: str = "harmonic"
    beta: float = 1.0
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "harmonic":
            if not self.beta > 0:
                raise ValueError("beta must be positive")
        elif self.kind == "custom":
            vals = np.asarray(self.values, dtype=float)
            if vals.ndim != 1 or vals.size == 0:
                raise ValueError("custom step sizes need a non-empty sequence")
            if np.any(vals <= 0) or np.any(np.diff(vals) > 0):
                raise ValueError("step sizes must be positive and non-increasing")
            object.__setattr__(self, "values", tuple(float(v) for v in vals))
        else:
            raise ValueError(f"unknown step-size kind {self.kind!r}")

    def __call__(self, k: int) -> float:
        if self.kind == "harmonic":
            return self.beta / (k + 1)
        if k >= len(self.values):
            raise IndexError(f"custom step-size sequence has no entry for k={k}")
        return self.values[k]

    def to_dict(self) -> dict:
        if self.kind == "harmonic":
            return {"kind": "harmonic", "beta": self.beta}
        return {"kind": "custom", "values": list(self.values)}


@dataclass(frozen=True)
class RunConfig:
    """Run parameters.

    ``refresh_window=None`` means "use m". With ``stop_early`` the run ends
    once every agent has triggered its refresh and the dual disagreement is
    below ``refresh_threshold``; otherwise all ``iterations`` rounds run.
    """

    iterations: int = 1000
    step_size: StepSizeSchedule = field(default_factory=StepSizeSchedule)
    refresh_threshold: float = 1e-5
    refresh_window: int | None = None
    seed: int = 0
    diagnostics_level: str = "basic"
    parallel: bool = False
    workers: int | None = None
    lambda0: np.ndarray | None = None
    stop_early: bool = False
    keep_primal_history: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not self.refresh_threshold > 0:
            raise ValueError("refresh threshold must be positive")
        if self.refresh_window is not None and self.refresh_window < 1:
            raise ValueError("refresh window must be at least 1")
        if self.diagnostics_level not in ("basic", "full"):
            raise ValueError("diagnostics_level must be 'basic' or 'full'")

    def window(self, m: int) -> int:
        return m if self.refresh_window is None else self.refresh_window

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "step_size": self.step_size.to_dict(),
            "refresh_threshold": self.refresh_threshold,
            "refresh_window": self.refresh_window,
            "seed": self.seed,
            "diagnostics_level": self.diagnostics_level,
            "parallel": self.parallel,
            "stop_early": self.stop_early,
        }


@dataclass
class AgentState:
    """Everything agent ``i`` carries from one round to the next."""

    lam: np.ndarray
    mixed: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    x_tilde: np.ndarray
    e_norm_history: list = field(default_factory=list)
    k_s: int | None = None
    consecutive_below: int = 0
    c_sum: float = 0.0
    c_sum_since_refresh: float = 0.0


@dataclass
class EngineState:
    problem: CoupledProblem
    agents: list[AgentState]
    oracles: list[ExactOracle]
    phi_oracles: list[ExactOracle] | None = None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([a.lam for a in self.agents]).reshape(len(self.agents), self.problem.p)


@dataclass
class RunTrace:
    """Per-iteration records of a run.

    Row ``t`` of every per-iteration array describes the state after round
    ``t``, i.e. iteration ``k = t + 1``. ``lambdas`` additionally holds the
    initial multipliers in row 0, so it has one more row.
    """

    m: int
    p: int
    k: np.ndarray
    c: np.ndarray
    obj_hat: np.ndarray
    obj_tilde: np.ndarray
    viol_hat: np.ndarray
    viol_tilde: np.ndarray
    dual_disagreement: np.ndarray
    dual_dist_to_ref: np.ndarray
    sum_e_sq: np.ndarray
    v: np.ndarray
    lambdas: np.ndarray
    e_norms: np.ndarray
    k_s: list
    x_hat: list
    x_tilde: list
    config: RunConfig
    phi_mixed: np.ndarray | None = None
    phi_v: np.ndarray | None = None
    x_hat_history: np.ndarray | None = None
    x_tilde_history: np.ndarray | None = None
    reference: CentralizedReference | None = None
    schedule_eta: float | None = None
    schedule_T: int | None = None

    def __len__(self) -> int:
        return self.k.shape[0]

    @property
    def viol_hat_max(self) -> np.ndarray:
        return self.viol_hat.max(axis=1, initial=0.0)

    @property
    def viol_tilde_max(self) -> np.ndarray:
        return self.viol_tilde.max(axis=1, initial=0.0)

    @property
    def dual_gap(self) -> np.ndarray | None:
        """``sum_i |phi_i(lhat_i(k)) - phi_i(v(k))|`` for rounds ``k = 0..N-1``."""
        if self.phi_mixed is None:
            return None
        return np.abs(self.phi_mixed - self.phi_v).sum(axis=1)

    def to_csv(self, path=None) -> str:
        """Write the trace table; floats use 17 significant digits so replays compare byte-wise."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(TRACE_COLUMNS) + [f"v_{j}" for j in range(self.p)])
        cols = [
            self.obj_hat, self.obj_tilde, self.viol_hat_max, self.viol_tilde_max,
            self.dual_disagreement, self.dual_dist_to_ref, self.sum_e_sq,
        ]
        for t in range(len(self)):
            row = [str(int(self.k[t]))] + [format(float(c[t]), ".17g") for c in cols]
            row += [format(float(x), ".17g") for x in self.v[t]]
            writer.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self, near_zero: float = 1e-6) -> dict:
        out = {
            "iterations": int(len(self)),
            "m": self.m,
            "p": self.p,
            "final_obj_hat": float(self.obj_hat[-1]),
            "final_obj_tilde": float(self.obj_tilde[-1]),
            "final_viol_hat_max": float(self.viol_hat_max[-1]),
            "final_viol_tilde_max": float(self.viol_tilde_max[-1]),
            "final_dual_disagreement": float(self.dual_disagreement[-1]),
            "final_sum_e_sq": float(self.sum_e_sq[-1]),
            "positive_multipliers": int(np.sum(self.v[-1] > near_zero)),
            "near_zero_multipliers": int(np.sum(self.v[-1] <= near_zero)),
            "refresh_iterations": [None if k is None else int(k) for k in self.k_s],
            "config": self.config.to_dict(),
        }
        ref = self.reference
        if ref is not None:
            out["f_star"] = float(ref.f_star)
            scale = abs(ref.f_star) if ref.f_star != 0 else 1.0
            out["gap_hat"] = float(abs(self.obj_hat[-1] - ref.f_star))
            out["gap_tilde"] = float(abs(self.obj_tilde[-1] - ref.f_star))
            out["rel_gap_hat"] = out["gap_hat"] / scale
            out["rel_gap_tilde"] = out["gap_tilde"] / scale
            out["final_dual_dist_to_ref"] = float(self.dual_dist_to_ref[-1])
        return out


# -- elementary updates -----------------------------------------------------------

def dual_update(mixed, c: float, g_val) -> np.ndarray:
    """Projected step ``max(0, mixed + c * g_val)``, the maximizer of the proximal dual step."""
    return np.maximum(np.asarray(mixed, dtype=float) + c * np.asarray(g_val, dtype=float), 0.0)


def primal_average_update(x_hat, x_new, c_k: float, c_cumulative: float) -> np.ndarray:
    """Fold ``x_new`` with weight ``c_k`` into an average whose weights sum to ``c_cumulative``."""
    if not c_cumulative > 0:
        raise ValueError("cumulative step size must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    return x_hat + (c_k / c_cumulative) * (np.asarray(x_new, dtype=float) - x_hat)


def refresh_update(
    state: AgentState,
    k: int,
    x_new,
    c_k: float,
    lambda_new,
    mixed,
    threshold: float,
    window: int,
) -> AgentState:
    """Advance the restarted average ``x_tilde`` after round ``k``.

    ``x_hat`` must already include round ``k``. The counter tracks how many
    consecutive rounds had ``||lambda_new - mixed|| < threshold``; once it
    reaches ``window`` at round ``k``, ``k_s = k`` and the average restarts
    with ``x_new`` as its first term. Restart happens at most once.
    """
    if state.k_s is None:
        err = float(np.linalg.norm(np.asarray(lambda_new) - np.asarray(mixed)))
        state.consecutive_below = state.consecutive_below + 1 if err < threshold else 0
        if state.consecutive_below >= window:
            state.k_s = k
            state.c_sum_since_refresh = c_k
            state.x_tilde = np.array(x_new, dtype=float)
        else:
            state.x_tilde = state.x_hat
    else:
        state.c_sum_since_refresh += c_k
        state.x_tilde = primal_average_update(state.x_tilde, x_new, c_k, state.c_sum_since_refresh)
    return state


# -- driver -----------------------------------------------------------------------

def _initial_multipliers(problem: CoupledProblem, lambda0) -> np.ndarray:
    m, p = problem.m, problem.p
    if lambda0 is None:
        return np.zeros((m, p))
    lam = np.asarray(lambda0, dtype=float)
    if lam.shape == (p,):
        lam = np.tile(lam, (m, 1))
    if lam.shape != (m, p):
        raise ProblemError(f"initial multipliers must have shape ({m}, {p}) or ({p},)")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ProblemError("initial multipliers must be finite and nonnegative")
    return lam.copy()


def initialize(problem: CoupledProblem, config: RunConfig) -> EngineState:
    """Zero (or user-given) multipliers and ``x_hat(0)`` minimizing ``f_i`` alone over ``X_i``."""
    lam0 = _initial_multipliers(problem, config.lambda0)
    agents, oracles = [], []
    for i, a in enumerate(problem.agents):
        oracle = ExactOracle(a)
        try:
            x0 = oracle.argmin(np.zeros(problem.p))
        except InfeasibleLocalSet:
            raise InfeasibleLocalSet(a.id, 0) from None
        agents.append(
            AgentState(lam=lam0[i], mixed=lam0[i].copy(), x=x0, x_hat=x0.copy(), x_tilde=x0.copy())
        )
        oracles.append(oracle)
    phi = None
    if config.diagnostics_level == "full":
        phi = [ExactOracle(a) for a in problem.agents]
    return EngineState(problem, agents, oracles, phi)


def _agent_round(state: EngineState, i: int, k: int, mixed: np.ndarray, v: np.ndarray,
                 c_k: float, config: RunConfig, window: int):
    agent = state.problem.agents[i]
    s = state.agents[i]
    try:
        x_new = state.oracles[i].argmin(mixed)
    except InfeasibleLocalSet:
        raise InfeasibleLocalSet(agent.id, k) from None
    g = eval_coupling(agent, x_new)
    lam_new = dual_update(mixed, c_k, g)
    s.c_sum += c_k
    s.x_hat = primal_average_update(s.x_hat, x_new, c_k, s.c_sum)
    refresh_update(s, k, x_new, c_k, lam_new, mixed, config.refresh_threshold, window)
    e = float(np.linalg.norm(lam_new - mixed))
    s.e_norm_history.append(e)
    s.x, s.mixed, s.lam = x_new, mixed, lam_new
    phi_m = phi_v = np.nan
    if state.phi_oracles is not None:
        phi_m = eval_local_lagrangian(agent, x_new, mixed)
        phi_v = eval_local_lagrangian(agent, state.phi_oracles[i].argmin(v), v)
    return e, phi_m, phi_v


def run(
    problem: CoupledProblem,
    schedule: WeightSchedule,
    config: RunConfig | None = None,
    reference: CentralizedReference | None = None,
) -> RunTrace:
    """Execute the synchronous rounds and return the trace.

    With ``config.parallel`` the per-agent work of a round runs on a thread
    pool; results are collected in agent order, so the trace is identical
    to the serial one.
    """
    config = config or RunConfig()
    m, p, N = problem.m, problem.p, config.iterations
    if schedule.m != m:
        raise ValueError(f"schedule is for {schedule.m} agents, problem has {m}")
    window = config.window(m)
    state = initialize(problem, config)
    full = config.diagnostics_level == "full"
    keep_x = full or config.keep_primal_history

    c_arr = np.zeros(N)
    obj_hat, obj_tilde = np.zeros(N), np.zeros(N)
    viol_hat, viol_tilde = np.zeros((N, p)), np.zeros((N, p))
    disagreement, dist_ref, sum_e_sq = np.zeros(N), np.full(N, np.nan), np.zeros(N)
    v_hist = np.zeros((N, p))
    lam_hist = np.zeros((N + 1, m, p))
    e_hist = np.zeros((N, m))
    phi_mixed = np.full((N, m), np.nan) if full else None
    phi_v = np.full((N, m), np.nan) if full else None
    xh_hist = np.zeros((N, problem.n)) if keep_x else None
    xt_hist = np.zeros((N, problem.n)) if keep_x else None
    lam_hist[0] = state.lambdas
    lam_star = None if reference is None or reference.lambda_star is None else reference.lambda_star

    pool = ThreadPoolExecutor(max_workers=config.workers) if config.parallel and m > 1 else None
    done = N
    try:
        for k in range(N):
            L = lam_hist[k]
            mixed = mix(schedule, k, L)
            v_k = L.mean(axis=0)
            c_k = config.step_size(k)
            c_arr[k] = c_k
            if pool is None:
                results = [_agent_round(state, i, k, mixed[i], v_k, c_k, config, window) for i in range(m)]
            else:
                futures = [
                    pool.submit(_agent_round, state, i, k, mixed[i], v_k, c_k, config, window)
                    for i in range(m)
                ]
                results = [f.result() for f in futures]
            lam_new = state.lambdas
            lam_hist[k + 1] = lam_new
            e_hist[k] = [r[0] for r in results]
            if full:
                phi_mixed[k] = [r[1] for r in results]
                phi_v[k] = [r[2] for r in results]
            v = lam_new.mean(axis=0)
            v_hist[k] = v
            disagreement[k] = float(np.max(np.linalg.norm(lam_new - v, axis=1)))
            if lam_star is not None:
                dist_ref[k] = float(np.max(np.linalg.norm(lam_new - lam_star, axis=1)))
            sum_e_sq[k] = float(np.sum(e_hist[k] ** 2))
            xh = [s.x_hat for s in state.agents]
            xt = [s.x_tilde for s in state.agents]
            obj_hat[k] = sum(eval_objective(a, x) for a, x in zip(problem.agents, xh))
            obj_tilde[k] = sum(eval_objective(a, x) for a, x in zip(problem.agents, xt))
            viol_hat[k] = problem.violation(xh)
            viol_tilde[k] = problem.violation(xt)
            if keep_x:
                xh_hist[k] = np.concatenate(xh)
                xt_hist[k] = np.concatenate(xt)
            if (
                config.stop_early
                and all(s.k_s is not None for s in state.agents)
                and disagreement[k] < config.refresh_threshold
            ):
                done = k + 1
                log.info("stopping after %d rounds: all agents refreshed", done)
                break
    finally:
        if pool is not None:
            pool.shutdown()

    cut = slice(0, done)
    return RunTrace(
        m=m,
        p=p,
        k=np.arange(1, done + 1),
        c=c_arr[cut],
        obj_hat=obj_hat[cut],
        obj_tilde=obj_tilde[cut],
        viol_hat=viol_hat[cut],
        viol_tilde=viol_tilde[cut],
        dual_disagreement=disagreement[cut],
        dual_dist_to_ref=dist_ref[cut],
        sum_e_sq=sum_e_sq[cut],
        v=v_hist[cut],
        lambdas=lam_hist[: done + 1],
        e_norms=e_hist[cut],
        k_s=[s.k_s for s in state.agents],
        x_hat=[s.x_hat.copy() for s in state.agents],
        x_tilde=[s.x_tilde.copy() for s in state.agents],
        config=config,
        phi_mixed=None if phi_mixed is None else phi_mixed[cut],
        phi_v=None if phi_v is None else phi_v[cut],
        x_hat_history=None if xh_hist is None else xh_hist[cut],
        x_tilde_history=None if xt_hist is None else xt_hist[cut],
        reference=reference,
        schedule_eta=schedule.eta,
        schedule_T=schedule.T,
    )


def summary_json(trace: RunTrace) -> str:
    return json.dumps(trace.summary(), indent=1, sort_keys=True)
