"""
Post-processing of run traces: consensus quantities, the error bound
linking disagreement to consensus errors, and the dual-gap rate statistic.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .engine import RunTrace
from .network import WeightSchedule
from .solvers.reference import CentralizedReference


class DiagnosticsError(ValueError):
    pass


def consensus_average(lambdas) -> np.ndarray:
    """Arithmetic mean of the agents' multipliers (rows of an ``m x p`` array)."""
    L = np.asarray(lambdas, dtype=float)
    if L.ndim != 2 or L.shape[0] < 1:
        raise DiagnosticsError("expected an m x p array with m >= 1")
    return L.mean(axis=0)


@dataclass(frozen=True)
class LemmaConstants:
    eta: float
    m: int
    T: int
    psi: float
    q: float
    alpha1: float
    alpha2: float
    alpha3: float
    G: float
    D: float

    def to_dict(self) -> dict:
        return {k: float(v) if isinstance(v, float) else v for k, v in self.__dict__.items()}


def contraction_constants(eta: float, m: int, T: int) -> tuple[float, float]:
    """``(psi, q)`` for mixing floor ``eta`` and window ``T``.

    The exponent ``(m - 1) T`` is clamped at 1 so that a single agent still
    gets finite constants.
    """
    if not 0.0 < eta < 1.0:
        raise DiagnosticsError(f"eta must lie in (0, 1), got {eta}")
    if T < 1:
        raise DiagnosticsError(f"T must be at least 1, got {T}")
    B = max((m - 1) * T, 1)
    e = eta**B
    psi = 2.0 * (1.0 + 1.0 / e) / (1.0 - e)
    q = float(np.exp(np.log1p(-e) / B))
    return psi, q


def default_alpha1(G: float) -> float:
    """``0.5 / (1 + G)``, which keeps ``1 - alpha1 (1 + G)`` positive."""
    return 0.5 / (1.0 + G)


def lemma1_constants(
    schedule: WeightSchedule | tuple[float, int],
    run: RunTrace,
    alpha1: float | None = None,
    G: float | None = None,
) -> LemmaConstants:
    """Evaluate ``psi, q, alpha2, alpha3`` for a schedule and a stored run.

    ``schedule`` may be a :class:`WeightSchedule` or an ``(eta, T)`` pair.
    ``alpha1`` defaults to ``0.5 / (1 + G)``, so either ``alpha1`` or ``G``
    must be supplied.
    """
    if isinstance(schedule, WeightSchedule):
        if schedule.m != run.m:
            raise DiagnosticsError(f"schedule has {schedule.m} agents, run has {run.m}")
        eta, T = schedule.eta, schedule.T
    else:
        eta, T = schedule
    m = run.m
    psi, q = contraction_constants(eta, m, T)
    if alpha1 is None:
        if G is None:
            raise DiagnosticsError("give alpha1 or G")
        alpha1 = default_alpha1(G)
    if not alpha1 > 0:
        raise DiagnosticsError("alpha1 must be positive")
    if len(run) < 2:
        raise DiagnosticsError("the run needs at least two rounds")
    alpha2 = (2.0 * m / alpha1) * (m**2 * psi**2 / (1.0 - q) ** 2 + 4.0)
    e1_sq = float(np.sum(run.e_norms[0] ** 2))
    lam0 = float(np.sum(np.linalg.norm(run.lambdas[0], axis=1)))
    c0, c1 = float(run.c[0]), float(run.c[1])
    alpha3 = (
        0.5 * alpha1 * e1_sq
        + 2.0 * m**3 * psi**2 / (alpha1 * (1.0 - q) ** 2) * c0**2
        + 2.0 * m * psi * q / (1.0 - q) * c1 * lam0
    )
    D = float(np.max(np.linalg.norm(run.lambdas, axis=2)))
    return LemmaConstants(eta, m, T, psi, q, alpha1, alpha2, alpha3, float("nan") if G is None else G, D)


@dataclass(frozen=True)
class BoundCheckReport:
    N: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    holds_for_all_N: bool
    margin_min: float

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "lhs", "rhs"])
        for n, a, b in zip(self.N, self.lhs, self.rhs):
            w.writerow([int(n), format(float(a), ".17g"), format(float(b), ".17g")])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def check_lemma1(run: RunTrace, constants: LemmaConstants, N: int | None = None) -> BoundCheckReport:
    """Evaluate both sides of the disagreement bound for ``N = 0 .. N``.

    ``lhs(N) = 2 sum_{k=1}^N c(k) sum_i ||lambda_i(k+1) - v(k+1)||`` and
    ``rhs(N) = alpha1 sum_{k=1}^N sum_i ||e_i(k+1)||^2 + alpha2 sum_{k=1}^N c(k)^2 + alpha3``.
    The bound is strict, so equality counts as a failure.
    """
    if constants.m != run.m:
        raise DiagnosticsError(f"constants were built for m={constants.m}, run has m={run.m}")
    rounds = len(run)
    N = rounds - 1 if N is None else N
    if N > rounds - 1 or N < 0:
        raise DiagnosticsError(f"N must lie in 0..{rounds - 1}")
    if run.lambdas.shape[0] < N + 2 or run.e_norms.shape[0] < N + 1:
        raise DiagnosticsError("the trace does not hold the multipliers needed for this N")
    ks = np.arange(1, N + 1)
    lam_next = run.lambdas[ks + 1]
    v_next = lam_next.mean(axis=1, keepdims=True)
    spread = np.linalg.norm(lam_next - v_next, axis=2).sum(axis=1)
    c = run.c[ks]
    e_sq = np.sum(run.e_norms[ks] ** 2, axis=1)
    lhs = np.concatenate([[0.0], np.cumsum(2.0 * c * spread)])
    rhs = np.concatenate(
        [[0.0], np.cumsum(constants.alpha1 * e_sq + constants.alpha2 * c**2)]
    ) + constants.alpha3
    margin = rhs - lhs
    return BoundCheckReport(
        np.arange(0, N + 1), lhs, rhs, bool(np.all(margin > 0)), float(margin.min())
    )


@dataclass(frozen=True)
class RateReport:
    r: np.ndarray
    running_min_gap: np.ndarray
    c_sum: np.ndarray
    product: np.ndarray

    @property
    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(self.product)


def dual_gap_rate(run: RunTrace, include_zero: bool = False) -> RateReport:
    """Running minimum of the dual consensus gap times the cumulative step size.

    The gap at round ``k`` is ``sum_i |phi_i(lhat_i(k)) - phi_i(v(k))|``.
    With the default zero initialization the gap at ``k = 0`` is exactly
    zero, which would make the statistic vanish trivially, so the minimum
    starts at ``k = 1`` unless ``include_zero`` is set.
    """
    gap = run.dual_gap
    if gap is None:
        raise DiagnosticsError("the run has no dual-function values (use diagnostics_level='full')")
    start = 0 if include_zero else 1
    if gap.shape[0] <= start:
        raise DiagnosticsError("the run is too short")
    rmin = np.minimum.accumulate(gap[start:])
    c_sum = np.cumsum(run.c)[start:]
    r = np.arange(start, gap.shape[0])
    return RateReport(r, rmin, c_sum, rmin * c_sum)


def running_max_change(values, start_fraction: float = 0.5) -> float:
    """Relative growth of the running maximum between ``start_fraction`` of the sequence and its end.

    Returns 0 when the running maximum is identically zero.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0
    rmax = np.maximum.accumulate(v)
    mid = int(np.floor(start_fraction * (v.size - 1)))
    final = rmax[-1]
    if final == 0.0:
        return 0.0
    return float((final - rmax[mid]) / abs(final))


def e_partial_sums(run: RunTrace) -> np.ndarray:
    """``S(K) = sum_{k=1}^K sum_i ||e_i(k)||^2`` for ``K = 1 .. N``."""
    return np.cumsum(run.sum_e_sq)


def tail_increase(run: RunTrace, fraction: float = 0.1) -> float:
    """Increase of the partial sums of squared consensus errors over the last ``fraction`` of the run."""
    S = e_partial_sums(run)
    cut = int(round((1.0 - fraction) * S.size))
    return float(S[-1] - S[cut - 1]) if cut >= 1 else float(S[-1])


def e_trend(run: RunTrace, head: int = 10) -> tuple[float, float]:
    """``(max_i ||e_i|| at the last round, max over the first `head` rounds)``."""
    return float(run.e_norms[-1].max(initial=0.0)), float(run.e_norms[:head].max(initial=0.0))


@dataclass(frozen=True)
class DistanceReport:
    k: np.ndarray
    dual: np.ndarray
    objective_gap_hat: np.ndarray
    objective_gap_tilde: np.ndarray
    violation_hat: np.ndarray
    violation_tilde: np.ndarray
    primal_hat: np.ndarray | None


def distance_to_reference(run: RunTrace, ref: CentralizedReference) -> DistanceReport:
    """Per-iteration distances of a run to a reference primal-dual pair.

    Point distances of the primal averages are reported only when the
    reference certifies a unique optimizer and the run kept its primal
    history; otherwise the objective gap and violation stand in for them.
    """
    if ref.lambda_star is not None and ref.lambda_star.shape[0] != run.p:
        raise DiagnosticsError("reference multiplier has the wrong length")
    dual = np.full(len(run), np.nan)
    if ref.lambda_star is not None:
        dual = np.max(np.linalg.norm(run.lambdas[1:] - ref.lambda_star, axis=2), axis=1)
    primal = None
    if ref.unique and run.x_hat_history is not None:
        if run.x_hat_history.shape[1] != ref.x_star.shape[0]:
            raise DiagnosticsError("reference point has the wrong length")
        primal = np.linalg.norm(run.x_hat_history - ref.x_star, axis=1)
    return DistanceReport(
        k=run.k.copy(),
        dual=dual,
        objective_gap_hat=np.abs(run.obj_hat - ref.f_star),
        objective_gap_tilde=np.abs(run.obj_tilde - ref.f_star),
        violation_hat=run.viol_hat_max,
        violation_tilde=run.viol_tilde_max,
        primal_hat=primal,
    )
