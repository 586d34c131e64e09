"""Centralized reference solutions used as test oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..problem import CoupledProblem
from .qp import QpSolver
from .simplex import SimplexSolver

MAX_GRID_POINTS = 10**6
MAX_GRID_DIM = 8


class InfeasibleProblem(RuntimeError):
    pass


@dataclass(frozen=True)
class CentralizedReference:
    """Optimal primal-dual pair of the coupled program.

    ``lambda_star`` is ``None`` for grid approximations, which carry no
    multiplier information. ``unique`` is True only when the solver could
    certify that the primal optimizer is unique.
    """

    x_star: np.ndarray
    lambda_star: np.ndarray | None
    f_star: float
    unique: bool = False

    def blocks(self, problem: CoupledProblem) -> list[np.ndarray]:
        return problem.split(self.x_star)


def stacked_program(problem: CoupledProblem, sparse: bool | None = None):
    """Return ``(q, Q or None, C, d, lb, ub)`` of the centralized program.

    The first ``p`` rows of ``C`` are the coupling constraints
    ``sum_i A_i x_i <= sum_i b_i``; the local rows follow agent by agent.
    """
    agents = problem.agents
    rows = problem.p + sum(a.feasible.rows for a in agents)
    if sparse is None:
        sparse = rows > 400
    coupling = sp.hstack([sp.csr_matrix(a.coupling.A) for a in agents], format="csr")
    local = sp.block_diag([sp.csr_matrix(a.feasible.C) for a in agents], format="csr")
    C = sp.vstack([coupling, local], format="csc")
    if not sparse:
        C = C.toarray()
    d = np.concatenate(
        [sum(a.coupling.b for a in agents) if problem.p else np.zeros(0)]
        + [a.feasible.d for a in agents]
    )
    q = np.concatenate([a.objective.q for a in agents])
    lb = np.concatenate([a.feasible.lb for a in agents])
    ub = np.concatenate([a.feasible.ub for a in agents])
    Q = None
    if any(a.objective.Q is not None for a in agents):
        Q = sp.block_diag(
            [a.objective.Q if a.objective.Q is not None else np.zeros((a.n, a.n)) for a in agents]
        ).toarray()
    return q, Q, C, d, lb, ub


def solve_centralized(problem: CoupledProblem, pivot_rule: str = "dantzig") -> CentralizedReference:
    """Solve the coupled program in one piece; multipliers come from the coupling rows."""
    q, Q, C, d, lb, ub = stacked_program(problem)
    if Q is None:
        sol = SimplexSolver(C, d, lb, ub, pivot_rule=pivot_rule).solve(q)
    else:
        dense = C.toarray() if sp.issparse(C) else C
        sol = QpSolver(Q, dense, d, lb, ub).solve(q)
    if sol.status != "optimal":
        raise InfeasibleProblem(f"centralized problem is {sol.status}")
    lam = np.maximum(sol.duals[: problem.p], 0.0)
    return CentralizedReference(sol.x, lam, sol.objective, unique=sol.unique)


def grid_axes(problem: CoupledProblem, spacing: float) -> list[np.ndarray]:
    """Per-coordinate lattice: both box endpoints included, step at most ``spacing``."""
    if spacing <= 0:
        raise ValueError("grid spacing must be positive")
    axes = []
    for a in problem.agents:
        for lo, hi in zip(a.feasible.lb, a.feasible.ub):
            count = int(np.ceil((hi - lo) / spacing - 1e-9)) + 1
            axes.append(np.linspace(lo, hi, max(count, 1)))
    return axes


def brute_force_reference(problem: CoupledProblem, spacing: float) -> CentralizedReference:
    """Exhaustive search over a box lattice.

    Only the feasible lattice points are compared, so the returned value
    is an upper bound on the true optimum. Limited to ``n <= 8`` and one
    million lattice points.
    """
    if problem.n > MAX_GRID_DIM:
        raise ValueError(f"brute force limited to n <= {MAX_GRID_DIM}, got {problem.n}")
    axes = grid_axes(problem, spacing)
    shape = tuple(len(ax) for ax in axes)
    total = int(np.prod(shape, dtype=np.int64))
    if total > MAX_GRID_POINTS:
        raise ValueError(f"grid has {total} points, limit is {MAX_GRID_POINTS}")

    offsets = np.cumsum([0] + problem.sizes)
    best_val, best_x = np.inf, None
    chunk = 200_000
    for start in range(0, total, chunk):
        idx = np.unravel_index(np.arange(start, min(start + chunk, total)), shape)
        X = np.column_stack([ax[i] for ax, i in zip(axes, idx)])
        ok = np.ones(X.shape[0], dtype=bool)
        value = np.zeros(X.shape[0])
        g = np.zeros((X.shape[0], problem.p))
        for k, a in enumerate(problem.agents):
            Xi = X[:, offsets[k]:offsets[k + 1]]
            poly = a.feasible
            if poly.rows:
                scale = 1e-12 * max(1.0, float(np.abs(poly.d).max()))
                ok &= np.all(Xi @ poly.C.T <= poly.d + scale, axis=1)
            value += Xi @ a.objective.q
            if a.objective.Q is not None:
                value += 0.5 * np.einsum("ij,jk,ik->i", Xi, a.objective.Q, Xi)
            if problem.p:
                g += Xi @ a.coupling.A.T - a.coupling.b
        if problem.p:
            ok &= np.all(g <= 1e-12, axis=1)
        if ok.any():
            cand = np.flatnonzero(ok)
            j = cand[np.argmin(value[cand])]
            if value[j] < best_val:
                best_val, best_x = float(value[j]), X[j].copy()
    if best_x is None:
        raise InfeasibleProblem("no feasible lattice point")
    return CentralizedReference(best_x, None, best_val, unique=False)
