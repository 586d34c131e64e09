"""Command-line entry point: ``dualsplit <subcommand> ...``.

Exit codes: 0 on success, 2 when validation fails or inputs are malformed,
3 when a solver fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .assumptions import compute_g_bound, validate_problem
from .diagnostics import (
    check_lemma1,
    dual_gap_rate,
    e_trend,
    lemma1_constants,
    running_max_change,
    tail_increase,
)
from .engine import RunConfig, StepSizeSchedule, run
from .experiments import (
    ExperimentError,
    ExperimentSpec,
    build_schedule,
    compare_run_dir,
    reference_to_dict,
    run_experiment,
)
from .network import ScheduleError, validate_schedule
from .pev import PevConfig, PevGenerationError, generate_pev
from .problem import ProblemError, load_problem, save_problem
from .solvers.local import InfeasibleLocalSet
from .solvers.reference import InfeasibleProblem, solve_centralized

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("dualsplit")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--beta", type=float, default=1.0, help="step size c(k) = beta / (k + 1)")
    p.add_argument("--threshold", type=float, default=1e-5, help="refresh threshold")
    p.add_argument("--window", type=int, default=None, help="refresh window (default: m)")
    p.add_argument("--seed", type=int, default=0, help="seed for the generated network")
    p.add_argument("--diagnostics", choices=("basic", "full"), default="basic")
    p.add_argument("--schedule", default="alternating", help="'alternating', 'static' or a schedule JSON file")
    p.add_argument("--parallel", action="store_true", help="run agents of a round on a thread pool")


def _config(args, diagnostics: str | None = None) -> RunConfig:
    return RunConfig(
        iterations=args.iters,
        step_size=StepSizeSchedule("harmonic", args.beta),
        refresh_threshold=args.threshold,
        refresh_window=args.window,
        seed=args.seed,
        diagnostics_level=diagnostics or args.diagnostics,
        parallel=args.parallel,
    )


def _print(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True, default=str))


def cmd_generate(args) -> int:
    cfg = PevConfig(m=args.m, slots=args.slots, seed=args.seed, network_fraction=args.network_fraction)
    problem, shape = generate_pev(cfg, return_shape=True)
    save_problem(problem, args.out)
    _print({
        "out": args.out, "m": shape.m, "n_i": shape.n_i, "p": shape.p,
        "local_rows": shape.local_rows, "local_inequalities": shape.local_inequalities,
        "attempts": shape.attempts,
    })
    return EXIT_OK


def cmd_validate(args) -> int:
    problem = load_problem(args.problem)
    report = validate_problem(problem)
    out = {"problem": report.to_dict()}
    ok = report.ok
    if args.schedule is not None:
        sched = build_schedule(args.schedule, problem.m, args.seed)
        horizon = args.horizon or 10 * sched.T * problem.m
        g = validate_schedule(sched, horizon)
        out["schedule"] = g.to_dict()
        ok = ok and g.ok
    _print(out)
    return EXIT_OK if ok else EXIT_INVALID


def cmd_solve_central(args) -> int:
    problem = load_problem(args.problem)
    ref = solve_centralized(problem)
    data = reference_to_dict(ref)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(data, fh, indent=1)
    _print({"f_star": ref.f_star, "lambda_star": data["lambda_star"], "unique": ref.unique})
    return EXIT_OK


def cmd_run(args) -> int:
    spec = ExperimentSpec(
        out_dir=args.out,
        problem=args.problem,
        schedule=args.schedule,
        schedule_seed=args.seed,
        config=_config(args),
        solve_reference=not args.no_reference,
    )
    summary = run_experiment(spec)
    _print({k: summary[k] for k in sorted(summary) if k not in ("spec", "lambda_star")})
    return EXIT_OK


def cmd_diagnose(args) -> int:
    problem = load_problem(args.problem)
    schedule = build_schedule(args.schedule, problem.m, args.seed)
    trace = run(problem, schedule, _config(args, "full"))
    G = compute_g_bound(problem).G
    consts = lemma1_constants(schedule, trace, alpha1=args.alpha1, G=G)
    N = min(args.horizon or len(trace) - 1, len(trace) - 1)
    lemma = check_lemma1(trace, consts, N)
    rate = dual_gap_rate(trace)
    last_e, head_e = e_trend(trace)
    report = {
        "constants": consts.to_dict(),
        "lemma1_holds": lemma.holds_for_all_N,
        "lemma1_margin_min": lemma.margin_min,
        "rate_product_final": float(rate.product[-1]),
        "rate_running_max_change_second_half": running_max_change(rate.product),
        "e_sq_tail_increase_last_10pct": tail_increase(trace),
        "max_e_last": last_e,
        "max_e_first10": head_e,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lemma.to_csv(out / "lemma1.csv")
        with open(out / "rate.csv", "w") as fh:
            fh.write("r,running_min_gap,c_sum,product\n")
            for row in zip(rate.r, rate.running_min_gap, rate.c_sum, rate.product):
                fh.write(f"{int(row[0])},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g}\n")
        with open(out / "diagnostics.json", "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
    _print(report)
    return EXIT_OK


def cmd_compare(args) -> int:
    rep = compare_run_dir(args.run_dir, args.viol_tol, args.gap_tol)
    _print(rep["summary"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualsplit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a PEV charging instance")
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--slots", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--network-fraction", type=float, default=PevConfig.network_fraction)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="check problem and schedule assumptions")
    p.add_argument("problem")
    p.add_argument("--schedule", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-central", help="solve the coupled problem in one piece")
    p.add_argument("problem")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve_central)

    p = sub.add_parser("run", help="run the distributed iteration and write artifacts")
    p.add_argument("problem")
    _add_run_flags(p)
    p.add_argument("--no-reference", action="store_true", help="skip the centralized solve")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diagnose", help="error-bound and rate diagnostics of a run")
    p.add_argument("problem")
    _add_run_flags(p)
    p.add_argument("--alpha1", type=float, default=None)
    p.add_argument("--horizon", type=int, default=None, help="largest N for the error bound")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("compare", help="plain vs restarted averages of a finished run")
    p.add_argument("run_dir")
    p.add_argument("--viol-tol", type=float, default=1e-3)
    p.add_argument("--gap-tol", type=float, default=1e-2)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (InfeasibleProblem, InfeasibleLocalSet, PevGenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.__cause__
        if isinstance(cause, (InfeasibleProblem, InfeasibleLocalSet, RuntimeError)) and not isinstance(
            cause, ExperimentError
        ):
            return EXIT_SOLVER
        return EXIT_INVALID
    except (ProblemError, ScheduleError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
