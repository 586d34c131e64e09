"""
Time-varying mixing schedules and their admissibility checks.

Entry ``(i, j)`` of ``A(k)`` is the weight agent ``i`` puts on the estimate
received from agent ``j`` at iteration ``k``; the directed edge ``j -> i``
is active when it is positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import networkx as nx
import numpy as np
from scipy.sparse.csgraph import connected_components

SUM_TOL = 1e-9
SINKHORN_TOL = 1e-12


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class WeightSchedule:
    """Mixing matrices ``A(k)`` with their declared constants.

    Either ``matrices`` (repeated with period ``len(matrices)``) or a
    ``generator`` mapping ``k`` to a matrix must be given.
    """

    m: int
    eta: float
    T: int
    matrices: tuple[np.ndarray, ...] | None = None
    generator: Callable[[int], np.ndarray] | None = None
    source: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.m < 1:
            raise ScheduleError("a schedule needs at least one agent")
        if self.T < 1:
            raise ScheduleError("T must be a positive integer")
        if not 0.0 < self.eta <= 1.0:
            raise ScheduleError("eta must lie in (0, 1]")
        if (self.matrices is None) == (self.generator is None):
            raise ScheduleError("give exactly one of matrices or generator")
        if self.matrices is not None:
            mats = []
            for M in self.matrices:
                M = np.array(M, dtype=float)
                if M.shape != (self.m, self.m):
                    raise ScheduleError(f"matrix of shape {M.shape}, expected {(self.m, self.m)}")
                M.setflags(write=False)
                mats.append(M)
            if not mats:
                raise ScheduleError("empty matrix list")
            object.__setattr__(self, "matrices", tuple(mats))

    @property
    def period(self) -> int | None:
        return None if self.matrices is None else len(self.matrices)

    def matrix(self, k: int) -> np.ndarray:
        if self.matrices is not None:
            return self.matrices[k % len(self.matrices)]
        M = np.asarray(self.generator(k), dtype=float)
        if M.shape != (self.m, self.m):
            raise ScheduleError(f"generator returned shape {M.shape} at k={k}")
        return M


@dataclass
class GraphReport:
    doubly_stochastic_ok: bool = True
    self_weight_ok: bool = True
    eta_ok: bool = True
    strongly_connected_ok: bool = True
    T_recurrence_ok: bool = True
    violations: list[tuple[int, int, int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.doubly_stochastic_ok
            and self.self_weight_ok
            and self.eta_ok
            and self.strongly_connected_ok
            and self.T_recurrence_ok
        )

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "doubly_stochastic_ok": self.doubly_stochastic_ok,
            "self_weight_ok": self.self_weight_ok,
            "eta_ok": self.eta_ok,
            "strongly_connected_ok": self.strongly_connected_ok,
            "T_recurrence_ok": self.T_recurrence_ok,
            "violations": [list(v) for v in self.violations],
        }


# -- construction ---------------------------------------------------------------

def _edge_list(m: int, edges) -> list[tuple[int, int]]:
    out = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if not (0 <= i < m and 0 <= j < m):
            raise ScheduleError(f"edge ({i}, {j}) outside 0..{m - 1}")
        if i != j:
            out.add((min(i, j), max(i, j)))
    return sorted(out)


def metropolis_weights(m: int, edges) -> np.ndarray:
    """Metropolis-Hastings weights of an undirected graph, balanced by Sinkhorn if needed."""
    edges = _edge_list(m, edges)
    deg = np.zeros(m, dtype=int)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    W = np.zeros((m, m))
    for i, j in edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    W[np.diag_indices(m)] = 1.0 - W.sum(axis=1)
    return sinkhorn(W)


def sinkhorn(W: np.ndarray, tol: float = SINKHORN_TOL, max_iter: int = 10_000) -> np.ndarray:
    """Alternate row and column scaling until both sums are within ``tol`` of one."""
    W = np.array(W, dtype=float)
    for _ in range(max_iter):
        if (
            np.max(np.abs(W.sum(axis=1) - 1.0)) <= tol
            and np.max(np.abs(W.sum(axis=0) - 1.0)) <= tol
        ):
            return W
        W /= W.sum(axis=1, keepdims=True)
        W /= W.sum(axis=0, keepdims=True)
    raise ScheduleError("Sinkhorn balancing did not converge")


def _realized_eta(mats: Sequence[np.ndarray]) -> float:
    return float(min(M[M > 0].min() for M in mats))


def _check_eta(realized: float, eta: float | None) -> float:
    if eta is not None and realized < eta - 1e-15:
        raise ScheduleError(f"realized minimum weight {realized:.3g} is below the requested eta {eta}")
    return realized


def static_metropolis_schedule(adjacency, eta: float | None = None) -> WeightSchedule:
    """Constant Metropolis mixing over a connected undirected graph."""
    adj = np.asarray(adjacency)
    m = adj.shape[0]
    if adj.shape != (m, m):
        raise ScheduleError("adjacency must be square")
    adj = adj != 0
    edges = list(zip(*np.nonzero(np.triu(adj, 1) | np.triu(adj.T, 1))))
    g = nx.Graph()
    g.add_nodes_from(range(m))
    g.add_edges_from(edges)
    if not nx.is_connected(g):
        raise ScheduleError("graph is not connected")
    W = metropolis_weights(m, edges)
    realized = _check_eta(_realized_eta([W]), eta)
    return WeightSchedule(
        m, realized, 1, matrices=(W,),
        source={"type": "static", "edges": [list(map(int, e)) for e in _edge_list(m, edges)]},
    )


def alternating_partition_schedule(m: int, edges_a, edges_b=None, eta: float | None = None) -> WeightSchedule:
    """Two edge groups activated on even and odd iterations.

    With ``edges_b`` omitted, or equal to ``edges_a``, the schedule is
    static (period and ``T`` equal to 1).
    """
    if m < 2:
        raise ScheduleError("alternating schedules need m >= 2")
    ea = _edge_list(m, edges_a)
    eb = ea if edges_b is None else _edge_list(m, edges_b)
    g = nx.Graph()
    g.add_nodes_from(range(m))
    g.add_edges_from(ea + eb)
    if not nx.is_connected(g):
        missing = [v for v in range(m) if g.degree(v) == 0]
        hint = f" (isolated nodes: {missing})" if missing else ""
        raise ScheduleError("union of the edge groups is not connected" + hint)
    source = {"type": "alternating", "m": m, "edges_a": [list(e) for e in ea], "edges_b": [list(e) for e in eb]}
    if ea == eb:
        W = metropolis_weights(m, ea)
        return WeightSchedule(m, _check_eta(_realized_eta([W]), eta), 1, matrices=(W,), source=source)
    mats = (metropolis_weights(m, ea), metropolis_weights(m, eb))
    return WeightSchedule(m, _check_eta(_realized_eta(mats), eta), 2, matrices=mats, source=source)


def random_geometric_partition(m: int, seed: int = 0, radius: float | None = None):
    """Connected random geometric graph with its edges dealt into two groups.

    The radius starts at ``sqrt(2 log m / m)`` (or the given value) and grows
    by 10% until the graph is connected. Edges are sorted and dealt
    alternately, so each group is a sparse half of the graph.
    """
    if m == 1:
        return [], []
    r = radius if radius is not None else max(np.sqrt(2.0 * np.log(m) / m), 0.3)
    for _ in range(100):
        g = nx.random_geometric_graph(m, r, seed=seed)
        if nx.is_connected(g):
            edges = sorted((min(i, j), max(i, j)) for i, j in g.edges())
            return edges[0::2], edges[1::2]
        r *= 1.1
    raise ScheduleError("could not build a connected geometric graph")


def random_geometric_schedule(m: int, seed: int = 0, radius: float | None = None) -> WeightSchedule:
    if m == 1:
        return WeightSchedule(1, 1.0, 1, matrices=(np.ones((1, 1)),), source={"type": "static", "edges": []})
    ea, eb = random_geometric_partition(m, seed, radius)
    return alternating_partition_schedule(m, ea, eb)


# -- validation -----------------------------------------------------------------

def _active_edges(M: np.ndarray) -> np.ndarray:
    E = M > 0
    np.fill_diagonal(E, False)
    return E


def validate_schedule(schedule: WeightSchedule, horizon: int, eta: float | None = None) -> GraphReport:
    """Check mixing admissibility over ``k = 0 .. horizon - 1``.

    Violations are reported as ``(k, i, j, reason)``; ``-1`` stands for
    "any" in the ``k`` or ``j`` slot. Recurring edges are taken to be the
    edges active during the last half of the horizon.
    """
    m, T = schedule.m, schedule.T
    if horizon < T * m:
        raise ValueError(f"horizon {horizon} is shorter than T*m = {T * m}")
    eta = schedule.eta if eta is None else eta
    rep = GraphReport()
    active = np.zeros((horizon, m, m), dtype=bool)

    for k in range(horizon):
        M = schedule.matrix(k)
        rows = np.flatnonzero(np.abs(M.sum(axis=1) - 1.0) > SUM_TOL)
        cols = np.flatnonzero(np.abs(M.sum(axis=0) - 1.0) > SUM_TOL)
        if rows.size or cols.size:
            rep.doubly_stochastic_ok = False
            if rows.size == 1 and cols.size == 1:
                rep.violations.append((k, int(rows[0]), int(cols[0]), "row and column sums differ from 1"))
            else:
                for i in rows:
                    rep.violations.append((k, int(i), -1, "row sum differs from 1"))
                for j in cols:
                    rep.violations.append((k, -1, int(j), "column sum differs from 1"))
        for i, j in zip(*np.nonzero((M < 0) | (M > 1.0 + SUM_TOL))):
            rep.doubly_stochastic_ok = False
            rep.violations.append((k, int(i), int(j), "weight outside [0, 1]"))
        diag = np.diag(M)
        for i in np.flatnonzero(diag < eta - 1e-15):
            rep.self_weight_ok = False
            rep.violations.append((k, int(i), int(i), "self weight below eta"))
        off = M.copy()
        np.fill_diagonal(off, 0.0)
        for i, j in zip(*np.nonzero((off > 0) & (off < eta - 1e-15))):
            rep.eta_ok = False
            rep.violations.append((k, int(i), int(j), "nonzero weight below eta"))
        active[k] = _active_edges(M)

    recurring = active[horizon // 2:].any(axis=0)
    if m > 1:
        ncomp, labels = connected_components(recurring.astype(int), directed=True, connection="strong")
        if ncomp > 1:
            rep.strongly_connected_ok = False
            touched = active | active.transpose(0, 2, 1)
            for i in range(m):
                history = touched[:, i, :].any(axis=1)
                if not recurring[i].any() and not recurring[:, i].any():
                    seen = np.flatnonzero(history)
                    since = 0 if seen.size == 0 else int(seen[-1]) + 1
                    rep.violations.append((since, i, i, "isolated node"))
            big = np.bincount(labels).argmax()
            for c in range(ncomp):
                if c == big:
                    continue
                members = np.flatnonzero(labels == c)
                if members.size == 1 and not (recurring[members[0]].any() or recurring[:, members[0]].any()):
                    continue
                rep.violations.append((-1, int(members[0]), -1, f"not strongly connected to component of size {np.sum(labels == big)}"))

    for i, j in zip(*np.nonzero(recurring)):
        on = np.flatnonzero(active[:, i, j])
        gaps_start = np.concatenate([[-1], on])
        gaps_end = np.concatenate([on, [horizon]])
        for s, e in zip(gaps_start, gaps_end):
            # window (s, e) exclusive contains e - s - 1 iterations without the edge
            if e - s - 1 >= T and e < horizon:
                rep.T_recurrence_ok = False
                rep.violations.append((int(s + 1), int(i), int(j), f"edge absent for {e - s - 1} >= T iterations"))
    return rep


# -- mixing ---------------------------------------------------------------------

def mix(schedule: WeightSchedule, k: int, estimates) -> np.ndarray:
    """Return ``A(k) @ estimates``: row ``i`` is agent ``i``'s mixed estimate."""
    L = np.asarray(estimates, dtype=float)
    if L.ndim != 2 or L.shape[0] != schedule.m:
        raise ScheduleError(f"estimates must have shape (m={schedule.m}, p), got {L.shape}")
    return schedule.matrix(k) @ L


# -- files ----------------------------------------------------------------------

def schedule_to_dict(schedule: WeightSchedule) -> dict:
    if schedule.source is not None and schedule.source.get("type") == "alternating":
        return dict(schedule.source)
    if schedule.matrices is None:
        raise ScheduleError("generator-backed schedules cannot be serialized")
    return {
        "m": schedule.m,
        "period": len(schedule.matrices),
        "eta": schedule.eta,
        "T": schedule.T,
        "matrices": [M.tolist() for M in schedule.matrices],
    }


def schedule_from_dict(data: dict) -> WeightSchedule:
    if data.get("type") == "alternating":
        return alternating_partition_schedule(int(data["m"]), data["edges_a"], data["edges_b"])
    mats = tuple(np.asarray(M, dtype=float) for M in data["matrices"])
    m = int(data["m"])
    if "period" in data and int(data["period"]) != len(mats):
        raise ScheduleError("period does not match the number of matrices")
    eta = float(data["eta"]) if "eta" in data else _realized_eta(mats)
    return WeightSchedule(m, eta, int(data.get("T", len(mats))), matrices=mats)


def save_schedule(schedule: WeightSchedule, path) -> None:
    with open(path, "w") as fh:
        json.dump(schedule_to_dict(schedule), fh, indent=1)


def load_schedule(path) -> WeightSchedule:
    with open(path) as fh:
        return schedule_from_dict(json.load(fh))
