"""Distributed dual decomposition with proximal dual updates over time-varying networks."""

from .assumptions import GBound, check_slater, compute_g_bound, validate_problem
from .diagnostics import (
    LemmaConstants,
    check_lemma1,
    consensus_average,
    distance_to_reference,
    dual_gap_rate,
    lemma1_constants,
)
from .engine import (
    AgentState,
    RunConfig,
    RunTrace,
    StepSizeSchedule,
    dual_update,
    initialize,
    primal_average_update,
    refresh_update,
    run,
)
from .network import (
    GraphReport,
    WeightSchedule,
    alternating_partition_schedule,
    mix,
    random_geometric_schedule,
    static_metropolis_schedule,
    validate_schedule,
)
from .problem import (
    AgentProblem,
    CoupledProblem,
    CouplingMap,
    ObjectiveForm,
    Polytope,
    ProblemError,
    eval_coupling,
    eval_local_lagrangian,
    eval_objective,
    load_problem,
    make_agent,
    save_problem,
)
from .solvers import (
    CentralizedReference,
    LpProblem,
    LpSolution,
    brute_force_reference,
    eval_dual_function,
    local_argmin,
    solve_centralized,
    solve_lp,
    solve_qp,
)

__version__ = "0.1.0"
