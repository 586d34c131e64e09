"""Small built-in instances for tests and demos."""

from __future__ import annotations

import numpy as np

from .assumptions import check_slater
from .problem import CoupledProblem, make_agent


def toy_problem(m: int = 2) -> CoupledProblem:
    """``min sum x_i`` over ``x_i in [0, 1]`` subject to ``1 - sum x_i <= 0``.

    For ``m = 2`` the optimal value is 1 and the unique multiplier is 1.
    """
    return CoupledProblem(
        [make_agent(i, [1.0], [[-1.0]], [-1.0 / m], [0.0], [1.0]) for i in range(m)]
    )


def decoupled_problem(m: int = 3, n: int = 2, seed: int = 0) -> CoupledProblem:
    """Agents with ``g_i = 0``: a single zero coupling row."""
    rng = np.random.default_rng(seed)
    return CoupledProblem(
        [
            make_agent(i, rng.normal(size=n), np.zeros((1, n)), [0.0], np.zeros(n), np.ones(n))
            for i in range(m)
        ]
    )


def random_instance(
    m: int,
    n: int,
    p: int,
    seed: int = 0,
    local_rows: int = 2,
    quadratic: bool = False,
    max_tries: int = 50,
) -> CoupledProblem:
    """Random bounded LP (or QP) with a Slater point.

    Each agent lives in ``[0, 1]^n`` cut by ``local_rows`` random halfspaces
    that keep the box centre strictly inside. The coupling right-hand side
    is chosen so that the centre point strictly satisfies the coupling rows
    while the all-minimizers point of the decoupled problem typically does
    not, so the coupling is active.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        agents = []
        centre_g = np.zeros(p)
        for i in range(m):
            q = rng.normal(size=n)
            A = rng.normal(size=(p, n))
            C = rng.normal(size=(local_rows, n))
            d = C @ np.full(n, 0.5) + rng.uniform(0.1, 0.5, size=local_rows)
            Q = None
            if quadratic:
                R = rng.normal(size=(n, n)) * 0.5
                Q = R @ R.T
            centre_g += A @ np.full(n, 0.5)
            agents.append((i, q, A, C, d, Q))
        slack = rng.uniform(0.05, 0.3, size=p)
        b_total = centre_g + slack
        built = [
            make_agent(i, q, A, b_total / m, np.zeros(n), np.ones(n), C=C, d=d, Q=Q)
            for i, q, A, C, d, Q in agents
        ]
        problem = CoupledProblem(built)
        if check_slater(problem).holds:
            return problem
    raise RuntimeError("could not draw an instance satisfying Slater's condition")
