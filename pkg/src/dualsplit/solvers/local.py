"""Per-agent Lagrangian minimization (the primal step of each round)."""

from __future__ import annotations

from typing import Protocol

import numpy as np

from ..problem import AgentProblem, ProblemError, eval_local_lagrangian
from .qp import QpSolver
from .simplex import OPT_TOL, SimplexSolver


class InfeasibleLocalSet(RuntimeError):
    """The local polytope of an agent is empty."""

    def __init__(self, agent_id: int, iteration: int | None = None):
        self.agent_id = agent_id
        self.iteration = iteration
        where = "" if iteration is None else f" at iteration {iteration}"
        super().__init__(f"local problem of agent {agent_id} is infeasible{where}")


class LocalOracle(Protocol):
    """Anything that returns a minimizer of ``f_i(x) + lam^T g_i(x)`` over ``X_i``.

    Users with their own convex subproblem solver plug it in here.
    """

    def argmin(self, lambda_hat: np.ndarray) -> np.ndarray: ...


class ExactOracle:
    """Exact LP/QP oracle with a warm-started private workspace.

    The workspace is mutable: keep one oracle per agent and per thread.
    """

    def __init__(self, agent: AgentProblem, pivot_rule: str = "bland"):
        self.agent = agent
        poly = agent.feasible
        # a linear objective over a bare box is minimized coordinate-wise;
        # ties stay at the lower bound, as the simplex started there would
        self._box_only = agent.objective.Q is None and poly.rows == 0
        if agent.objective.Q is None:
            self._solver = SimplexSolver(poly.C, poly.d, poly.lb, poly.ub, pivot_rule=pivot_rule)
        else:
            self._solver = QpSolver(agent.objective.Q, poly.C, poly.d, poly.lb, poly.ub)

    def argmin(self, lambda_hat: np.ndarray) -> np.ndarray:
        agent = self.agent
        lam = np.asarray(lambda_hat, dtype=float).reshape(-1)
        if lam.shape[0] != agent.p:
            raise ProblemError(f"multiplier has length {lam.shape[0]}, expected {agent.p}")
        cost = agent.objective.q + agent.coupling.A.T @ lam
        if self._box_only:
            poly = agent.feasible
            return np.where(cost < -OPT_TOL, poly.ub, poly.lb)
        sol = self._solver.solve(cost)
        if sol.status != "optimal":
            raise InfeasibleLocalSet(agent.id)
        return sol.x


def local_argmin(agent: AgentProblem, lambda_hat) -> np.ndarray:
    """Minimize ``f_i(x) + lambda_hat^T g_i(x)`` over ``X_i`` from a cold start.

    When the minimizer is not unique the vertex reached first from the
    lower bounds under Bland's rule is returned, so the result is a pure
    function of the input.
    """
    lam = np.asarray(lambda_hat, dtype=float).reshape(-1)
    if np.any(lam < 0):
        raise ProblemError("multiplier has a negative component")
    return ExactOracle(agent).argmin(lam)


def eval_dual_function(agent: AgentProblem, lam) -> tuple[float, np.ndarray]:
    """Return ``(phi_i(lam), minimizer)`` with ``phi_i(lam) = min_X L_i(x, lam)``."""
    x = local_argmin(agent, lam)
    return eval_local_lagrangian(agent, x, lam), x
