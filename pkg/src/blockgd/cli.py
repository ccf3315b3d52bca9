"""Command-line interface: solve, bench, verify, and trace workflows.

Exit status convention: 0 success (solve/trace additionally require
convergence), 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .analysis import (
    run_bounds_suite,
    run_descent_suite,
    run_expectation_suite,
    run_jacobian_suite,
)
from .exceptions import (
    BlockGDError,
    ConfigFileError,
    InvalidConfigError,
    InvalidProblemError,
    UnknownProblemError,
)
from .harness import compare_table, export_csv, export_trace, load_experiment_config, run_experiment
from .problems import load_linear_problem, linear_problem, make_problem, registered_problems
from .solvers import METHODS, SolverConfig, solve

VERIFY_SUITES = {
    "jacobian": run_jacobian_suite,
    "descent": run_descent_suite,
    "expectation": run_expectation_suite,
    "bounds": run_bounds_suite,
}


def _resolve_problem(name, n):
    """Registry lookup, or ``linear:<path>`` to load a linear system file."""
    if name.startswith("linear:"):
        spec = load_linear_problem(name[len("linear:"):])
        if n is not None and n != spec.n:
            raise InvalidProblemError(
                f"--n {n} does not match the {spec.m}x{spec.n} system in the file")
        return linear_problem(spec.matrix, spec.rhs, name=name)
    return make_problem(name, n)


def _add_solver_flags(parser):
    parser.add_argument("--problem", required=True,
                        help=f"problem name ({', '.join(registered_problems())}) "
                             "or linear:<path> to load a linear system file")
    parser.add_argument("--n", type=int, required=True, help="problem dimension")
    parser.add_argument("--method", required=True, choices=METHODS)
    parser.add_argument("--q", type=int, default=None,
                        help="block size (required for scbgd and rowblock-gd)")
    parser.add_argument("--delta", type=float, default=1.0,
                        help="step relaxation in (0, 2), default 1")
    parser.add_argument("--tol", type=float, default=1e-6,
                        help="residual norm threshold, default 1e-6")
    parser.add_argument("--max-iter", type=int, default=200000,
                        help="iteration cap, default 200000")
    parser.add_argument("--seed", type=int, default=0, help="PRNG seed, default 0")
    parser.add_argument("--residual-update", choices=("full", "incremental"), default=None,
                        help="residual refresh mode; default: incremental when the "
                             "problem declares row supports")


def _run_solver(args):
    problem = _resolve_problem(args.problem, args.n)
    config = SolverConfig(method=args.method, q=args.q, delta=args.delta, tol=args.tol,
                          max_iter=args.max_iter, seed=args.seed,
                          residual_update=args.residual_update)
    return problem, solve(problem, config)


def _summary_line(args, problem, result) -> str:
    flag = "true" if result.converged else "false"
    return (f"{args.method} {problem.name} {problem.n} {result.iterations} "
            f"{result.final_residual:.6e} {result.wall_time_s:.4f} {flag}")


def cmd_solve(args) -> int:
    try:
        problem, result = _run_solver(args)
    except (InvalidConfigError, InvalidProblemError, UnknownProblemError) as exc:
        print(f"blockgd solve: {exc}", file=sys.stderr)
        return 2
    except (BlockGDError, OSError) as exc:
        print(f"blockgd solve: {exc}", file=sys.stderr)
        return 1
    print(_summary_line(args, problem, result))
    return 0 if result.converged else 1


def cmd_trace(args) -> int:
    try:
        problem, result = _run_solver(args)
    except (InvalidConfigError, InvalidProblemError, UnknownProblemError) as exc:
        print(f"blockgd trace: {exc}", file=sys.stderr)
        return 2
    except (BlockGDError, OSError) as exc:
        print(f"blockgd trace: {exc}", file=sys.stderr)
        return 1
    try:
        export_trace(result, args.out)
    except OSError as exc:
        print(f"blockgd trace: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    print(_summary_line(args, problem, result))
    return 0 if result.converged else 1


def cmd_bench(args) -> int:
    try:
        config = load_experiment_config(args.config)
    except ConfigFileError as exc:
        print(f"blockgd bench: {args.config}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"blockgd bench: {exc}", file=sys.stderr)
        return 2
    except UnknownProblemError as exc:
        print(f"blockgd bench: {exc}", file=sys.stderr)
        return 2
    report = run_experiment(config)
    table = compare_table(report)
    try:
        if config.csv_path:
            export_csv(report, config.csv_path)
        if config.table_path:
            with open(config.table_path, "w", encoding="ascii", newline="") as fh:
                fh.write(table)
    except OSError as exc:
        print(f"blockgd bench: cannot write output: {exc}", file=sys.stderr)
        return 1
    print(table, end="")
    return 0


def cmd_verify(args) -> int:
    checks = VERIFY_SUITES[args.suite]()
    for check in checks:
        print(check.line())
    passed = sum(check.passed for check in checks)
    print(f"{passed}/{len(checks)} checks passed")
    return 0 if passed == len(checks) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockgd",
        description="Block gradient descent solvers for nonlinear systems: "
                    "run solves, benchmark campaigns, theory checks, and traces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one solve and print a summary line")
    _add_solver_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_bench = sub.add_parser("bench", help="run a benchmark campaign from a config file")
    p_bench.add_argument("--config", required=True, help="experiment config file path")
    p_bench.set_defaults(func=cmd_bench)

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("--suite", required=True, choices=sorted(VERIFY_SUITES))
    p_verify.set_defaults(func=cmd_verify)

    p_trace = sub.add_parser("trace", help="run one solve and export its residual trace")
    _add_solver_flags(p_trace)
    p_trace.add_argument("--out", required=True, help="trace CSV output path")
    p_trace.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
