"""
Bounded-variable revised simplex method.

Solves ``min c^T x  s.t.  C x <= d,  lb <= x <= ub`` with finite bounds.
Each row ``j`` gets a slack ``s_j >= 0`` and an artificial ``a_j`` so that
``C x + s - a = d``. Phase 1 drives the artificials to zero, phase 2 keeps
them fixed at zero. The basis inverse is kept as an LU factorization plus
a product-form eta file that is refactored periodically.

Pivoting is deterministic. With ``pivot_rule="bland"`` the entering
variable is the lowest-index improving column and ties in the ratio test
go to the lowest variable index, which rules out cycling. With
``pivot_rule="dantzig"`` the most negative reduced cost enters and the
solver falls back to Bland's rule after a run of degenerate pivots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
_DENSE_LIMIT = 400
_DEGENERATE_STREAK = 50


@dataclass(frozen=True)
class LpProblem:
    """``min c^T x`` subject to ``C x <= d`` and ``lb <= x <= ub``."""

    c: np.ndarray
    C: np.ndarray
    d: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.shape[0]
        d = np.asarray(self.d, dtype=float).reshape(-1)
        C = self.C if sp.issparse(self.C) else np.asarray(self.C, dtype=float).reshape(d.shape[0], n)
        lb = np.asarray(self.lb, dtype=float).reshape(-1)
        ub = np.asarray(self.ub, dtype=float).reshape(-1)
        if C.shape != (d.shape[0], n) or lb.shape != (n,) or ub.shape != (n,):
            raise ValueError("inconsistent LP dimensions")
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ValueError("LP bounds must be finite")
        if np.any(lb > ub):
            raise ValueError("LP has lb > ub")
        for name, value in (("c", c), ("C", C), ("d", d), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def rows(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class LpSolution:
    """Solver result.

    ``duals`` are the row multipliers ``mu >= 0``; together with the bound
    multipliers they satisfy ``grad + C^T mu - lower_duals + upper_duals = 0``.
    """

    status: str
    x: np.ndarray
    objective: float
    duals: np.ndarray
    lower_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    upper_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    unique: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _BasisFactor:
    """LU factorization of the basis matrix plus an eta file."""

    def __init__(self, B, refactor_every: int):
        self.refactor_every = refactor_every
        self.etas: list[tuple[int, np.ndarray]] = []
        if sp.issparse(B):
            self._lu = spla.splu(sp.csc_matrix(B))
            self._solve = lambda rhs: self._lu.solve(rhs)
            self._solve_t = lambda rhs: self._lu.solve(rhs, trans="T")
        else:
            self._lu = sla.lu_factor(B, check_finite=False)
            self._solve = lambda rhs: sla.lu_solve(self._lu, rhs, check_finite=False)
            self._solve_t = lambda rhs: sla.lu_solve(self._lu, rhs, trans=1, check_finite=False)

    def ftran(self, a: np.ndarray) -> np.ndarray:
        z = self._solve(a)
        for p, alpha in self.etas:
            zp = z[p] / alpha[p]
            z -= alpha * zp
            z[p] = zp
        return z

    def btran(self, w: np.ndarray) -> np.ndarray:
        w = np.array(w, dtype=float)
        for p, alpha in reversed(self.etas):
            w[p] = (w[p] - (w @ alpha - w[p] * alpha[p])) / alpha[p]
        return self._solve_t(w)

    def update(self, p: int, alpha: np.ndarray) -> bool:
        """Record a pivot; returns True when a refactorization is due."""
        self.etas.append((p, alpha.copy()))
        return len(self.etas) >= self.refactor_every


class SimplexSolver:
    """Reusable simplex workspace for a fixed feasible region.

    The constraint data ``(C, d, lb, ub)`` is fixed at construction; each
    call to :meth:`solve` supplies a cost vector. After the first solve the
    optimal basis is kept and later solves start from it (the basis stays
    primal feasible because only the cost changes). One instance per thread.
    """

    def __init__(self, C, d, lb, ub, pivot_rule: str = "bland", max_iter: int | None = None):
        if pivot_rule not in ("bland", "dantzig"):
            raise ValueError(f"unknown pivot rule {pivot_rule!r}")
        self.pivot_rule = pivot_rule
        d = np.asarray(d, dtype=float).reshape(-1)
        lb = np.asarray(lb, dtype=float).reshape(-1)
        ub = np.asarray(ub, dtype=float).reshape(-1)
        n, r = lb.shape[0], d.shape[0]
        self.n, self.r = n, r
        self.sparse = sp.issparse(C) or r > _DENSE_LIMIT
        if self.sparse:
            self.C = sp.csc_matrix(C, dtype=float)
            self.CT = sp.csr_matrix(self.C.T)
        else:
            self.C = np.asarray(C.toarray() if sp.issparse(C) else C, dtype=float).reshape(r, n)
            self.CT = self.C.T.copy()
        if self.C.shape != (r, n):
            raise ValueError("inconsistent constraint dimensions")
        self.d = d
        self.max_iter = max_iter if max_iter is not None else 50 * (n + r) + 1000
        ncol = n + 2 * r
        self.lo = np.zeros(ncol)
        self.hi = np.zeros(ncol)
        self.lo[:n], self.hi[:n] = lb, ub
        self.hi[n:n + r] = np.inf
        self.refactor_every = 100 if self.sparse else 64
        self._feasible: bool | None = None
        self._factor: _BasisFactor | None = None

    # -- column access -------------------------------------------------------
    def _column(self, j: int) -> np.ndarray:
        n, r = self.n, self.r
        if j < n:
            if self.sparse:
                col = np.zeros(r)
                lo, hi = self.C.indptr[j], self.C.indptr[j + 1]
                col[self.C.indices[lo:hi]] = self.C.data[lo:hi]
                return col
            return self.C[:, j].copy()
        col = np.zeros(r)
        col[(j - n) % r] = 1.0 if j < n + r else -1.0
        return col

    def _basis_matrix(self):
        n, r = self.n, self.r
        if not self.sparse:
            B = np.zeros((r, r))
            for pos, j in enumerate(self.basis):
                if j < n:
                    B[:, pos] = self.C[:, j]
                else:
                    B[(j - n) % r, pos] = 1.0 if j < n + r else -1.0
            return B
        data, indices, indptr = [], [], [0]
        C = self.C
        for j in self.basis:
            if j < n:
                lo, hi = C.indptr[j], C.indptr[j + 1]
                data.append(C.data[lo:hi])
                indices.append(C.indices[lo:hi])
            else:
                data.append(np.array([1.0 if j < n + r else -1.0]))
                indices.append(np.array([(j - n) % r]))
            indptr.append(indptr[-1] + len(data[-1]))
        return sp.csc_matrix(
            (np.concatenate(data), np.concatenate(indices), np.array(indptr)), shape=(r, r)
        )

    def _refactor(self):
        self._factor = _BasisFactor(self._basis_matrix(), self.refactor_every)
        self._recompute_basic_values()

    def _recompute_basic_values(self):
        n, r = self.n, self.r
        nonbasic = ~self.is_basic
        rhs = self.d.copy()
        xs = np.where(nonbasic[:n], self.x[:n], 0.0)
        rhs -= self.C @ xs
        rhs -= np.where(nonbasic[n:n + r], self.x[n:n + r], 0.0)
        rhs += np.where(nonbasic[n + r:], self.x[n + r:], 0.0)
        self.x[self.basis] = self._factor.ftran(rhs)

    # -- setup ---------------------------------------------------------------
    def _cold_start(self):
        n, r = self.n, self.r
        ncol = n + 2 * r
        self.x = np.zeros(ncol)
        self.x[:n] = self.lo[:n]
        self.at_upper = np.zeros(ncol, dtype=bool)
        residual = self.d - self.C @ self.x[:n]
        self.basis = np.empty(r, dtype=np.int64)
        self.hi[n + r:] = 0.0
        infeasible = residual < 0.0
        for i in range(r):
            if infeasible[i]:
                self.basis[i] = n + r + i
                self.hi[n + r + i] = np.inf
            else:
                self.basis[i] = n + i
        self.is_basic = np.zeros(ncol, dtype=bool)
        self.is_basic[self.basis] = True
        self._refactor()
        return bool(infeasible.any())

    # -- core iteration ------------------------------------------------------
    def _reduced_costs(self, cost: np.ndarray):
        n, r = self.n, self.r
        y = self._factor.btran(cost[self.basis])
        dj = np.empty(n + 2 * r)
        dj[:n] = cost[:n] - self.CT @ y
        dj[n:n + r] = cost[n:n + r] - y
        dj[n + r:] = cost[n + r:] + y
        dj[self.is_basic] = 0.0
        return y, dj

    def _iterate(self, cost: np.ndarray) -> tuple[str, int, np.ndarray, np.ndarray]:
        n = self.n
        tol = OPT_TOL * max(1.0, float(np.max(np.abs(cost), initial=0.0)))
        bland = self.pivot_rule == "bland"
        degenerate = 0
        iters = 0
        while True:
            y, dj = self._reduced_costs(cost)
            movable = self.hi > self.lo
            candidates = np.flatnonzero(
                movable & ~self.is_basic & np.where(self.at_upper, dj > tol, dj < -tol)
            )
            if candidates.size == 0:
                return "optimal", iters, y, dj
            if iters >= self.max_iter:
                raise RuntimeError("simplex iteration limit reached")
            use_bland = bland or degenerate >= _DEGENERATE_STREAK
            if use_bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(dj[candidates]))])
            alpha = self._factor.ftran(self._column(q))
            sigma = -1.0 if self.at_upper[q] else 1.0
            # basic values move as x_B - sigma * t * alpha
            rate = -sigma * alpha
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            big = np.abs(alpha) > PIVOT_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                t_dec = np.where(big & (rate < 0), (xb - lob) / -rate, np.inf)
                t_inc = np.where(big & (rate > 0), (hib - xb) / rate, np.inf)
            ratios = np.maximum(np.minimum(t_dec, t_inc), 0.0)
            t_flip = self.hi[q] - self.lo[q]
            t_min = min(float(ratios.min(initial=np.inf)), t_flip)
            if not np.isfinite(t_min):
                return "unbounded", iters, y, dj
            tie = t_min + 1e-12 * max(1.0, t_min)
            ties = np.flatnonzero(ratios <= tie)
            flip = t_flip <= tie
            iters += 1
            if flip and (ties.size == 0 or use_bland and q < int(self.basis[ties].min())):
                # entering variable jumps to its opposite bound
                self.x[self.basis] = xb - sigma * t_flip * alpha
                self.at_upper[q] = not self.at_upper[q]
                self.x[q] = self.hi[q] if self.at_upper[q] else self.lo[q]
                degenerate = 0
                continue
            if use_bland:
                p = int(ties[np.argmin(self.basis[ties])])
            else:
                p = int(ties[np.argmax(np.abs(alpha[ties]))])
            t = float(ratios[p])
            degenerate = degenerate + 1 if t <= 0.0 else 0
            leaving = int(self.basis[p])
            self.x[self.basis] = xb - sigma * t * alpha
            self.x[q] += sigma * t
            to_upper = rate[p] > 0
            self.at_upper[leaving] = to_upper
            self.x[leaving] = self.hi[leaving] if to_upper else self.lo[leaving]
            self.is_basic[leaving] = False
            self.is_basic[q] = True
            self.at_upper[q] = False
            self.basis[p] = q
            if self._factor.update(p, alpha):
                self._refactor()
            if leaving < n:
                self.x[leaving] = min(max(self.x[leaving], self.lo[leaving]), self.hi[leaving])

    # -- public API ----------------------------------------------------------
    def reset(self):
        """Forget the warm basis."""
        self._feasible = None

    def solve(self, c) -> LpSolution:
        c = np.asarray(c, dtype=float).reshape(-1)
        n, r = self.n, self.r
        if c.shape[0] != n:
            raise ValueError(f"cost has length {c.shape[0]}, expected {n}")
        iters = 0
        if self._feasible is None:
            needs_phase1 = self._cold_start()
            if needs_phase1:
                cost1 = np.zeros(n + 2 * r)
                cost1[n + r:] = 1.0
                _, iters, _, _ = self._iterate(cost1)
                infeas = float(self.x[n + r:].sum())
                if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(self.d), initial=0.0))):
                    self._feasible = False
                else:
                    self._feasible = True
                    self.hi[n + r:] = 0.0
                    art = self.x[n + r:]
                    art[:] = 0.0
                    self.at_upper[n + r:] = False
                    self._recompute_basic_values()
            else:
                self._feasible = True
        if not self._feasible:
            return LpSolution("infeasible", np.full(n, np.nan), np.nan, np.full(r, np.nan), iterations=iters)

        cost = np.zeros(n + 2 * r)
        cost[:n] = c
        status, it2, y, dj = self._iterate(cost)
        iters += it2
        if it2:
            self._recompute_basic_values()
        x = np.clip(self.x[:n], self.lo[:n], self.hi[:n])
        if status != "optimal":
            return LpSolution(status, x, -np.inf, np.full(r, np.nan), iterations=iters)
        duals = -y
        d_struct = np.where(self.is_basic[:n], 0.0, dj[:n])
        # a fixed variable may carry a multiplier of either sign
        fixed = self.hi[:n] <= self.lo[:n]
        lower = np.where(self.at_upper[:n] & ~fixed, 0.0, np.maximum(d_struct, 0.0))
        upper = np.where(self.at_upper[:n] | fixed, np.maximum(-d_struct, 0.0), 0.0)
        movable = (self.hi > self.lo) & ~self.is_basic
        tol = 1e-9 * max(1.0, float(np.max(np.abs(c), initial=0.0)))
        unique = bool(np.all(np.abs(dj[movable]) > tol))
        return LpSolution(
            "optimal",
            x,
            float(c @ x),
            duals,
            lower_duals=lower,
            upper_duals=upper,
            iterations=iters,
            unique=unique,
        )


def solve_lp(lp: LpProblem, pivot_rule: str = "bland") -> LpSolution:
    """Solve ``lp`` from a cold start.

    Structural variables start at their lower bounds, so degenerate
    objectives return the vertex reached first from ``lb``.
    """
    return SimplexSolver(lp.C, lp.d, lp.lb, lp.ub, pivot_rule=pivot_rule).solve(lp.c)
