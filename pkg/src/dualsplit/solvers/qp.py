"""
Primal active-set method for convex QPs over bounded polytopes.

``min 0.5 x^T Q x + q^T x  s.t.  C x <= d,  lb <= x <= ub``

The simplex kernel supplies a feasible starting vertex (it minimizes the
linear part), after which the working set is updated one constraint at a
time. Steps are computed in the null space of the working set; directions
of zero curvature are followed to the boundary, so singular ``Q`` is fine.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .simplex import LpSolution, SimplexSolver

_CURV_TOL = 1e-10
_MULT_TOL = 1e-10


class QpSolver:
    """Reusable active-set workspace for a fixed feasible region.

    Between solves the last optimal point and working set are kept; since
    the feasible region does not change they are a valid warm start.
    """

    def __init__(self, Q, C, d, lb, ub, max_iter: int | None = None):
        Q = np.asarray(Q, dtype=float)
        lb = np.asarray(lb, dtype=float).reshape(-1)
        ub = np.asarray(ub, dtype=float).reshape(-1)
        n = lb.shape[0]
        if Q.shape != (n, n):
            raise ValueError(f"Q has shape {Q.shape}, expected {(n, n)}")
        if not np.allclose(Q, Q.T, atol=1e-12, rtol=0.0):
            raise ValueError("Q is not symmetric")
        if n and np.linalg.eigvalsh(Q).min() < -1e-9:
            raise ValueError("Q is not positive semidefinite")
        C = np.asarray(C, dtype=float).reshape(-1, n)
        d = np.asarray(d, dtype=float).reshape(-1)
        self.Q = Q
        self.n, self.r = n, d.shape[0]
        eye = np.eye(n)
        # rows: general constraints, then x <= ub, then -x <= -lb
        self.G = np.vstack([C, eye, -eye])
        self.h = np.concatenate([d, ub, -lb])
        self.max_iter = max_iter if max_iter is not None else 20 * (n + self.r) + 200
        self._lp = SimplexSolver(C, d, lb, ub)
        self._x: np.ndarray | None = None
        self._work: list[int] | None = None

    def _independent_active(self, x: np.ndarray) -> list[int]:
        slack = self.h - self.G @ x
        scale = 1e-9 * max(1.0, float(np.max(np.abs(self.h), initial=0.0)))
        active = np.flatnonzero(slack <= scale)
        if active.size == 0:
            return []
        _, R, perm = sla.qr(self.G[active].T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > 1e-10 * max(1.0, diag.max(initial=0.0))))
        return sorted(int(i) for i in active[perm[:rank]])

    def _null_space(self, work: list[int]) -> np.ndarray:
        if not work:
            return np.eye(self.n)
        Qf, _ = sla.qr(self.G[work].T, mode="full")
        return Qf[:, len(work):]

    def solve(self, q) -> LpSolution:
        q = np.asarray(q, dtype=float).reshape(-1)
        n, r = self.n, self.r
        if self._x is None:
            start = self._lp.solve(q)
            if start.status != "optimal":
                return LpSolution(start.status, start.x, np.nan, np.full(r, np.nan))
            x = start.x.copy()
            work = self._independent_active(x)
        else:
            x = self._x.copy()
            work = list(self._work)

        Q, G, h = self.Q, self.G, self.h
        stalls = 0
        for it in range(self.max_iter):
            grad = Q @ x + q
            Z = self._null_space(work)
            p = np.zeros(n)
            linear = False
            if Z.shape[1]:
                H = Z.T @ Q @ Z
                gz = Z.T @ grad
                w, V = np.linalg.eigh(H)
                curved = w > _CURV_TOL * max(1.0, float(np.abs(w).max(initial=0.0)))
                flat_grad = V[:, ~curved].T @ gz
                if np.linalg.norm(flat_grad) > 1e-12 * max(1.0, np.linalg.norm(grad)):
                    p = -Z @ (V[:, ~curved] @ flat_grad)
                    linear = True
                else:
                    Vc = V[:, curved]
                    p = -Z @ (Vc @ ((Vc.T @ gz) / w[curved]))
            if np.max(np.abs(p), initial=0.0) <= 1e-12 * max(1.0, np.max(np.abs(x), initial=0.0)):
                if not work:
                    break
                mu = np.linalg.lstsq(G[work].T, -grad, rcond=None)[0]
                if mu.min() >= -_MULT_TOL * max(1.0, np.max(np.abs(grad))):
                    break
                if stalls > 20:
                    drop = int(np.flatnonzero(mu < 0)[0])
                else:
                    drop = int(np.argmin(mu))
                work.pop(drop)
                continue
            Gp = G @ p
            slack = np.maximum(h - G @ x, 0.0)
            in_work = np.zeros(G.shape[0], dtype=bool)
            in_work[work] = True
            blocking = (~in_work) & (Gp > 1e-12 * max(1.0, np.abs(p).max()))
            ratios = np.full(G.shape[0], np.inf)
            ratios[blocking] = slack[blocking] / Gp[blocking]
            step_max = np.inf if linear else 1.0
            alpha = min(step_max, float(ratios.min(initial=np.inf)))
            if not np.isfinite(alpha):
                return LpSolution("unbounded", x, -np.inf, np.full(r, np.nan), iterations=it)
            x = x + alpha * p
            stalls = stalls + 1 if alpha <= 0.0 else 0
            if ratios.min(initial=np.inf) <= alpha:
                hit = int(np.flatnonzero(ratios <= alpha)[0])
                work.append(hit)
                work.sort()
        else:
            raise RuntimeError("active-set iteration limit reached")

        x = np.clip(x, self.h[r + n:] * -1.0, self.h[r:r + n])
        grad = Q @ x + q
        mult = np.zeros(G.shape[0])
        if work:
            mult[work] = np.maximum(np.linalg.lstsq(G[work].T, -grad, rcond=None)[0], 0.0)
        strong = [i for i in work if mult[i] > 1e-9]
        Zs = self._null_space(strong)
        unique = True
        if Zs.shape[1]:
            unique = bool(np.linalg.eigvalsh(Zs.T @ Q @ Zs).min() > 1e-9)
        self._x, self._work = x.copy(), list(work)
        return LpSolution(
            "optimal",
            x,
            float(q @ x + 0.5 * x @ Q @ x),
            mult[:r],
            lower_duals=mult[r + n:],
            upper_duals=mult[r:r + n],
            iterations=it,
            unique=unique,
        )


def solve_qp(Q, q, C, d, lb, ub) -> LpSolution:
    """Solve a convex QP from a cold start."""
    return QpSolver(Q, C, d, lb, ub).solve(q)
