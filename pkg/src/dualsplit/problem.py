"""
Separable convex programs with coupling inequality constraints.

Each agent ``i`` owns a decision vector ``x_i`` together with

* an objective ``f_i(x) = q^T x + 0.5 x^T Q x`` (``Q`` symmetric PSD),
* an affine coupling map ``g_i(x) = A x - b`` with ``p`` rows,
* a bounded polytope ``X_i = {x : C x <= d, lb <= x <= ub}``.

The coupled program is ``min sum_i f_i(x_i)`` subject to
``sum_i g_i(x_i) <= 0`` and ``x_i in X_i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-9


class ProblemError(ValueError):
    """Raised for malformed problem data."""


def _vector(values, name: str, length: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if length is not None and arr.shape[0] != length:
        raise ProblemError(f"{name}: expected length {length}, got {arr.shape[0]}")
    arr.setflags(write=False)
    return arr


def _matrix(values, name: str, rows: int | None, cols: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(0 if rows is None else rows, cols)
    if arr.ndim != 2 or arr.shape[1] != cols or (rows is not None and arr.shape[0] != rows):
        raise ProblemError(f"{name}: expected shape ({rows}, {cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ProblemError(f"{name}: non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ObjectiveForm:
    """Linear or convex-quadratic objective ``q^T x + 0.5 x^T Q x``."""

    q: np.ndarray
    Q: np.ndarray | None = None

    def __post_init__(self):
        q = _vector(self.q, "objective.q")
        object.__setattr__(self, "q", q)
        if self.Q is None:
            return
        Q = _matrix(self.Q, "objective.Q", q.shape[0], q.shape[0])
        if not np.allclose(Q, Q.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise ProblemError("objective.Q is not symmetric")
        if Q.size and np.linalg.eigvalsh(Q).min() < -PSD_TOL:
            raise ProblemError("objective.Q is not positive semidefinite")
        if not np.any(Q):
            Q = None
        object.__setattr__(self, "Q", Q)

    @property
    def kind(self) -> str:
        return "linear" if self.Q is None else "quadratic"

    @property
    def n(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class CouplingMap:
    """Affine coupling contribution ``g(x) = A x - b``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        b = _vector(self.b, "coupling.b")
        A = np.array(self.A, dtype=float)
        if A.ndim != 2:
            raise ProblemError(f"coupling.A must be a 2-d array, got shape {A.shape}")
        A = _matrix(A, "coupling.A", b.shape[0], A.shape[1])
        if not np.all(np.isfinite(b)):
            raise ProblemError("coupling.b: non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def p(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class Polytope:
    """Bounded polytope ``{x : C x <= d, lb <= x <= ub}``.

    Finite box bounds are mandatory; they are how compactness is enforced.
    """

    C: np.ndarray
    d: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        lb = _vector(self.lb, "polytope.lb")
        ub = _vector(self.ub, "polytope.ub", lb.shape[0])
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ProblemError("polytope bounds must be finite (compactness)")
        if np.any(lb > ub):
            raise ProblemError("polytope has lb > ub")
        d = _vector(self.d, "polytope.d")
        C = _matrix(self.C, "polytope.C", d.shape[0], lb.shape[0])
        if not np.all(np.isfinite(d)):
            raise ProblemError("polytope.d: non-finite entries")
        for name, value in (("C", C), ("d", d), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.lb.shape[0]

    @property
    def rows(self) -> int:
        return self.d.shape[0]

    def residual(self, x: np.ndarray) -> float:
        """Largest constraint violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.rows:
            worst = max(worst, float(np.max(self.C @ x - self.d)))
        worst = max(worst, float(np.max(self.lb - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.ub, initial=0.0)))
        return worst

    def contains(self, x: np.ndarray, tol: float = 1e-8) -> bool:
        return self.residual(x) <= tol

    def is_nonempty(self) -> bool:
        """Certify nonemptiness with a feasibility solve."""
        from .solvers.simplex import solve_lp, LpProblem

        sol = solve_lp(LpProblem(np.zeros(self.n), self.C, self.d, self.lb, self.ub))
        return sol.status == "optimal"


@dataclass(frozen=True)
class AgentProblem:
    """The local data ``(f_i, g_i, X_i)`` of one agent."""

    id: int
    objective: ObjectiveForm
    coupling: CouplingMap
    feasible: Polytope

    def __post_init__(self):
        n = self.feasible.n
        if self.objective.n != n:
            raise ProblemError(f"agent {self.id}: objective has {self.objective.n} entries, expected {n}")
        if self.coupling.A.shape[1] != n:
            raise ProblemError(f"agent {self.id}: coupling.A has {self.coupling.A.shape[1]} columns, expected {n}")

    @property
    def n(self) -> int:
        return self.feasible.n

    @property
    def p(self) -> int:
        return self.coupling.p


@dataclass(frozen=True)
class CoupledProblem:
    """Collection of agents sharing ``p`` coupling rows."""

    agents: tuple[AgentProblem, ...]
    p: int = field(default=-1)

    def __post_init__(self):
        agents = tuple(self.agents)
        if not agents:
            raise ProblemError("a coupled problem needs at least one agent")
        p = agents[0].p if self.p < 0 else self.p
        for agent in agents:
            if agent.p != p:
                raise ProblemError(f"agent {agent.id} has {agent.p} coupling rows, expected {p}")
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "p", p)

    @property
    def m(self) -> int:
        return len(self.agents)

    @property
    def sizes(self) -> list[int]:
        return [a.n for a in self.agents]

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        """Split a stacked vector into per-agent blocks."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise ProblemError(f"stacked vector has length {x.shape[0]}, expected {self.n}")
        return np.split(x, np.cumsum(self.sizes)[:-1])

    def objective(self, xs: Sequence[np.ndarray]) -> float:
        return float(sum(eval_objective(a, x) for a, x in zip(self.agents, xs)))

    def coupling(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        total = np.zeros(self.p)
        for a, x in zip(self.agents, xs):
            total += eval_coupling(a, x)
        return total

    def violation(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        """Component-wise ``max(sum_i g_i(x_i), 0)``."""
        return np.maximum(self.coupling(xs), 0.0)


def _check_dim(agent: AgentProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != agent.n:
        raise ProblemError(f"agent {agent.id}: expected vector of length {agent.n}, got {x.shape[0]}")
    return x


def eval_objective(agent: AgentProblem, x) -> float:
    """Return ``q^T x + 0.5 x^T Q x``."""
    x = _check_dim(agent, x)
    obj = agent.objective
    value = float(obj.q @ x)
    if obj.Q is not None:
        value += 0.5 * float(x @ obj.Q @ x)
    return value


def eval_coupling(agent: AgentProblem, x) -> np.ndarray:
    """Return ``A x - b``."""
    x = _check_dim(agent, x)
    return agent.coupling.A @ x - agent.coupling.b


def eval_local_lagrangian(agent: AgentProblem, x, lam) -> float:
    """Return ``f_i(x) + lam^T g_i(x)`` for a nonnegative multiplier."""
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape[0] != agent.p:
        raise ProblemError(f"multiplier has length {lam.shape[0]}, expected {agent.p}")
    if np.any(lam < 0):
        raise ProblemError("multiplier has a negative component")
    return eval_objective(agent, x) + float(lam @ eval_coupling(agent, x))


# -- construction helpers -------------------------------------------------------

def make_agent(
    id: int,
    q,
    A,
    b,
    lb,
    ub,
    C=None,
    d=None,
    Q=None,
) -> AgentProblem:
    """Build an :class:`AgentProblem` from plain arrays."""
    lb = np.asarray(lb, dtype=float).reshape(-1)
    n = lb.shape[0]
    if C is None:
        C = np.zeros((0, n))
        d = np.zeros(0)
    b = np.asarray(b, dtype=float).reshape(-1)
    A = np.asarray(A, dtype=float).reshape(b.shape[0], n)
    return AgentProblem(
        id=id,
        objective=ObjectiveForm(q, Q),
        coupling=CouplingMap(A, b),
        feasible=Polytope(C, d, lb, ub),
    )


# -- JSON round trip ------------------------------------------------------------

def problem_to_dict(problem: CoupledProblem) -> dict:
    agents = []
    for a in problem.agents:
        entry = {
            "n": a.n,
            "objective": {"q": a.objective.q.tolist()},
            "coupling": {"A": a.coupling.A.tolist(), "b": a.coupling.b.tolist()},
            "polytope": {
                "C": a.feasible.C.tolist(),
                "d": a.feasible.d.tolist(),
                "lb": a.feasible.lb.tolist(),
                "ub": a.feasible.ub.tolist(),
            },
        }
        if a.objective.Q is not None:
            entry["objective"]["Q"] = a.objective.Q.tolist()
        agents.append(entry)
    return {"m": problem.m, "p": problem.p, "agents": agents}


def problem_from_dict(data: dict) -> CoupledProblem:
    p = int(data["p"])
    agents = []
    for i, entry in enumerate(data["agents"]):
        n = int(entry["n"])
        poly = entry["polytope"]
        C = poly.get("C") or []
        d = poly.get("d") or []
        agents.append(
            AgentProblem(
                id=i,
                objective=ObjectiveForm(entry["objective"]["q"], entry["objective"].get("Q")),
                coupling=CouplingMap(
                    _matrix(entry["coupling"]["A"], f"agent {i} coupling.A", p, n),
                    entry["coupling"]["b"],
                ),
                feasible=Polytope(_matrix(C, f"agent {i} polytope.C", len(d), n), d, poly["lb"], poly["ub"]),
            )
        )
    problem = CoupledProblem(tuple(agents), p)
    if "m" in data and int(data["m"]) != problem.m:
        raise ProblemError(f"file declares m={data['m']} but lists {problem.m} agents")
    return problem


def save_problem(problem: CoupledProblem, path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=1))


def load_problem(path) -> CoupledProblem:
    return problem_from_dict(json.loads(Path(path).read_text()))
