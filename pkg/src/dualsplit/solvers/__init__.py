from .local import ExactOracle, InfeasibleLocalSet, LocalOracle, eval_dual_function, local_argmin
from .qp import QpSolver, solve_qp
from .reference import (
    CentralizedReference,
    InfeasibleProblem,
    brute_force_reference,
    solve_centralized,
    stacked_program,
)
from .simplex import LpProblem, LpSolution, SimplexSolver, solve_lp

__all__ = [
    "CentralizedReference",
    "ExactOracle",
    "InfeasibleLocalSet",
    "InfeasibleProblem",
    "LocalOracle",
    "LpProblem",
    "LpSolution",
    "QpSolver",
    "SimplexSolver",
    "brute_force_reference",
    "eval_dual_function",
    "local_argmin",
    "solve_centralized",
    "solve_lp",
    "solve_qp",
    "stacked_program",
]
