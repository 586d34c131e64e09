"""Executable checks of the standing assumptions on a coupled program."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .problem import CoupledProblem
from .solvers.reference import stacked_program
from .solvers.simplex import SimplexSolver

SLATER_TOL = 1e-7


@dataclass(frozen=True)
class SlaterResult:
    holds: bool
    witness: np.ndarray | None
    margin: float

    def __iter__(self):
        # allows ``holds, witness = check_slater(problem)``
        return iter((self.holds, self.witness))


@dataclass(frozen=True)
class GBound:
    """Uniform bound ``G >= ||g_i(x_i)||`` over every ``X_i``."""

    G: float
    per_agent: tuple[float, ...] = ()
    row_max: tuple[np.ndarray, ...] = ()


@dataclass
class ProblemReport:
    dimensions_ok: bool = True
    bounded_ok: bool = True
    nonempty_ok: bool = True
    slater_ok: bool = True
    slater_margin: float = float("nan")
    G: float = float("nan")
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.dimensions_ok and self.bounded_ok and self.nonempty_ok and self.slater_ok

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "dimensions_ok": self.dimensions_ok,
            "bounded_ok": self.bounded_ok,
            "nonempty_ok": self.nonempty_ok,
            "slater_ok": self.slater_ok,
            "slater_margin": self.slater_margin,
            "G": self.G,
            "messages": list(self.messages),
        }


def _equality_pairs(C: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Flag rows that form ``a x <= b`` and ``-a x <= -b`` pairs (written equalities)."""
    flag = np.zeros(C.shape[0], dtype=bool)
    if C.shape[0] < 2:
        return flag
    M = np.column_stack([C, d])
    norms = np.linalg.norm(M, axis=1)
    for r in range(C.shape[0]):
        if norms[r] == 0 or flag[r]:
            continue
        close = np.flatnonzero(np.all(np.abs(M + M[r]) <= 1e-12 * max(1.0, norms[r]), axis=1))
        if close.size:
            flag[r] = True
            flag[close] = True
    return flag


def _margin_program(problem: CoupledProblem):
    """Build ``max t`` over ``(x, t)`` with every inequality tightened by ``t``.

    Box bounds and local rows receive the margin (scaled by the row norm);
    coupling rows, being affine, only need to hold. Fixed coordinates and
    written equality pairs are exempt from the margin.
    """
    _, _, C, d, lb, ub = stacked_program(problem, sparse=True)
    C = sp.csr_matrix(C)
    n, p = lb.shape[0], problem.p
    local = C[p:]
    eq = np.concatenate(
        [np.zeros(0, dtype=bool)]
        + [_equality_pairs(a.feasible.C, a.feasible.d) for a in problem.agents]
    )
    norms = np.sqrt(np.asarray(local.multiply(local).sum(axis=1)).reshape(-1))
    t_local = np.where(eq, 0.0, norms)
    movable = np.flatnonzero(ub > lb)
    sel = sp.eye(n, format="csr")[movable]
    ones = sp.csr_matrix(np.ones((movable.size, 1)))
    M = sp.vstack(
        [
            sp.hstack([C[:p], sp.csr_matrix((p, 1))]),
            sp.hstack([local, sp.csr_matrix(t_local.reshape(-1, 1))]),
            sp.hstack([-sel, ones]),
            sp.hstack([sel, ones]),
        ],
        format="csc",
    )
    if M.shape[0] <= 400:
        M = M.toarray()
    r = np.concatenate([d[:p], d[p:], -lb[movable], ub[movable]])
    return M, r, np.append(lb, 0.0), np.append(ub, 1.0)


def slater_margins(problem: CoupledProblem, witness: np.ndarray) -> dict:
    """Re-evaluate the certificate of a Slater witness.

    Returns the worst coupling value, the smallest box margin over movable
    coordinates and the smallest local-row margin over non-equality rows.
    """
    x = np.asarray(witness, dtype=float)
    xs = problem.split(x)
    coupling = problem.coupling(xs)
    box, rows = np.inf, np.inf
    for a, xi in zip(problem.agents, xs):
        poly = a.feasible
        mov = poly.ub > poly.lb
        if mov.any():
            box = min(box, float(np.min(np.minimum(xi - poly.lb, poly.ub - xi)[mov])))
        if poly.rows:
            eq = _equality_pairs(poly.C, poly.d)
            if (~eq).any():
                norms = np.maximum(np.linalg.norm(poly.C, axis=1), 1e-300)
                rows = min(rows, float(np.min(((poly.d - poly.C @ xi) / norms)[~eq])))
    return {
        "coupling_max": float(coupling.max(initial=-np.inf)),
        "box_margin": box,
        "row_margin": rows,
    }


def check_slater(problem: CoupledProblem, tol: float = SLATER_TOL) -> SlaterResult:
    """Look for a point strictly inside every ``X_i`` that meets the coupling rows.

    Solves one LP maximizing a common margin ``t in [0, 1]``. The condition
    holds when the optimal margin exceeds ``tol``. Without coupling rows the
    condition holds vacuously.
    """
    M, r, lo, hi = _margin_program(problem)
    cost = np.zeros(lo.shape[0])
    cost[-1] = -1.0
    sol = SimplexSolver(M, r, lo, hi, pivot_rule="dantzig").solve(cost)
    if sol.status != "optimal":
        if problem.p == 0:
            return SlaterResult(True, None, float("nan"))
        return SlaterResult(False, None, float("nan"))
    margin = float(sol.x[-1])
    holds = margin > tol or problem.p == 0
    return SlaterResult(holds, sol.x[:-1].copy(), margin)


def compute_g_bound(problem: CoupledProblem) -> GBound:
    """Certified over-approximation of ``max_i max_{X_i} ||g_i(x_i)||``.

    Each coupling row is maximized and minimized separately over ``X_i``
    (``2p`` LPs per agent); the per-row maxima of ``|A_i x - b_i|`` are then
    combined as ``sqrt(sum_j rowmax_j^2)``.
    """
    per_agent, row_max = [], []
    for a in problem.agents:
        poly = a.feasible
        solver = SimplexSolver(poly.C, poly.d, poly.lb, poly.ub, pivot_rule="dantzig")
        rm = np.zeros(a.p)
        for j in range(a.p):
            row = a.coupling.A[j]
            hi = solver.solve(-row)
            lo = solver.solve(row)
            if hi.status != "optimal" or lo.status != "optimal":
                raise ValueError(f"agent {a.id}: local set is empty or unbounded")
            b = a.coupling.b[j]
            rm[j] = max(abs(-hi.objective - b), abs(lo.objective - b))
        row_max.append(rm)
        per_agent.append(float(np.sqrt(np.sum(rm**2))))
    return GBound(max(per_agent, default=0.0), tuple(per_agent), tuple(row_max))


def validate_problem(problem: CoupledProblem, with_slater: bool = True) -> ProblemReport:
    """Run the structural, nonemptiness and Slater checks and collect a report."""
    report = ProblemReport()
    for a in problem.agents:
        if a.p != problem.p:
            report.dimensions_ok = False
            report.messages.append(f"agent {a.id}: coupling dimension {a.p} != {problem.p}")
        if not (np.all(np.isfinite(a.feasible.lb)) and np.all(np.isfinite(a.feasible.ub))):
            report.bounded_ok = False
            report.messages.append(f"agent {a.id}: unbounded box")
        if not a.feasible.is_nonempty():
            report.nonempty_ok = False
            report.messages.append(f"agent {a.id}: local set is empty")
    if not (report.dimensions_ok and report.nonempty_ok):
        report.slater_ok = False
        return report
    report.G = compute_g_bound(problem).G
    if with_slater:
        res = check_slater(problem)
        report.slater_ok = res.holds
        report.slater_margin = res.margin
        if not res.holds:
            report.messages.append("no strictly feasible point found")
    return report
