"""Command-line driver and benchmark harness.

Runs the built-in benchmark problems (or user-supplied tabular/custom
games) with a choice of solver, prints a per-iteration table, and can emit
machine-readable CSV plus a grid dump of the final value and strategies for
external plotting.  A standalone `amg-solve` subcommand solves a single
linear system read in Matrix Market form.

Exit codes: 0 on success, 2 on solver non-convergence, 1 on usage or I/O
errors.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .amg import AmgConfig, amg_solve, setup_hierarchy
from .csr import read_matrix_market
from .fmg import LevelNonConvergence, fmg_solve
from .game import (
    GameInstance,
    OuterRecord,
    PolicyPair,
    SolveReport,
    error_norms,
    parse_tabular_game,
    random_game,
    residual,
    value_iteration,
)
from .pde import BENCHMARKS, GridSpec, build_game, exact_solution, parse_problem_config
from .policy import PiConfig, improve_max_with_values, improve_min, solve_game

SOLVERS = ("amgpi", "lu-pi", "famgpi", "value-iter")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str
    m: int = 64
    solver: str = "amgpi"
    epsilon: str = "1e-10"
    fmg_c: float = 1e-2
    fmg_levels: Optional[int] = None
    theta: float = 0.25
    nu1: int = 1
    nu2: int = 1
    cycle: str = "W"
    amg_tol: float = 1e-12
    max_outer: int = 2000
    max_inner: int = 20000
    csv_path: Optional[str] = None
    dump_path: Optional[str] = None
    seed: int = 0

    def resolve_epsilon(self, h: Optional[float]) -> float:
        """Accepts plain floats and the symbolic form `<coef>h2`, which is
        resolved to coef * h^2 once the grid is known."""
        text = self.epsilon.strip().lower()
        if text.endswith("h2"):
            if h is None:
                raise UsageError("an h2-relative epsilon needs a grid problem")
            return float(text[:-2]) * h * h
        return float(text)

    def amg_config(self) -> AmgConfig:
        return AmgConfig(
            theta=self.theta, nu1=self.nu1, nu2=self.nu2,
            gamma=1 if self.cycle.upper() == "V" else 2,
            tol=self.amg_tol,
        )

    def pi_config(self, h: Optional[float]) -> PiConfig:
        return PiConfig(
            epsilon=self.resolve_epsilon(h),
            max_outer=self.max_outer,
            max_inner=self.max_inner,
            linear_solver="direct" if self.solver == "lu-pi" else "amg",
            amg=self.amg_config(),
        )


def _fmt(x, width=12) -> str:
    if x is None:
        return " " * width
    return f"{x:.2e}".rjust(width)


def print_report(report: SolveReport, out=sys.stdout) -> None:
    if report.level_points is not None:
        out.write(f"-- level: {report.level_points} points per direction --\n")
    out.write(" ki  nkj  AMG            ||r||_inf    ||r||_L2     ||e||_inf    ||e||_L2     cpu(s)\n")
    for r in report.records:
        amg = ",".join(str(c) for c in r.amg_iters if c is not None)
        out.write(
            f"{r.ki:3d} {r.nkj:4d}  {amg:13s}{_fmt(r.res_inf)} {_fmt(r.res_rms)}"
            f"{_fmt(r.err_inf)} {_fmt(r.err_rms)} {r.elapsed_seconds:10.3f}\n"
        )
    out.write(f"termination: {report.termination}\n")


def emit_csv(reports, path) -> None:
    """One row per outer iteration; FAMG reports appear as consecutive
    blocks in coarse-to-fine order."""
    if not reports:
        raise ValueError("no reports to write")
    with open(path, "w") as fh:
        fh.write("level_points,ki,nkj,amg_iters,res_inf,res_rms,err_inf,err_rms,cpu_s\n")
        for rep in reports:
            lp = "" if rep.level_points is None else str(rep.level_points)
            for r in rep.records:
                amg = ";".join(str(c) for c in r.amg_iters if c is not None)
                err_i = "" if r.err_inf is None else f"{r.err_inf:.5e}"
                err_r = "" if r.err_rms is None else f"{r.err_rms:.5e}"
                fh.write(
                    f"{lp},{r.ki},{r.nkj},{amg},{r.res_inf:.5e},{r.res_rms:.5e},"
                    f"{err_i},{err_r},{r.elapsed_seconds:.5e}\n"
                )


def _policy_token(policy, i) -> str:
    row = np.asarray(policy)[i]
    if np.ndim(row) == 0:
        if isinstance(row.item(), float):
            return f"{row:.10g}"
        return str(int(row))
    return ",".join(f"{c:.10g}" for c in row)


def emit_grid_dump(v, policies, grid: GridSpec, path) -> None:
    """Rows `x y v alpha beta` (x v alpha beta in one dimension), one per
    interior point in row-major order; vector actions are comma-joined."""
    pts = grid.points()
    with open(path, "w") as fh:
        for i in range(grid.n_states):
            coords = " ".join(f"{c:.10g}" for c in pts[i])
            fh.write(
                f"{coords} {v[i]:.10g} {_policy_token(policies.alpha, i)} "
                f"{_policy_token(policies.beta, i)}\n"
            )


def _load_problem(config: RunConfig):
    """Returns (game, grid, exact, problem) — grid/exact/problem are None
    for tabular games."""
    sel = config.problem
    if sel in BENCHMARKS:
        problem = BENCHMARKS[sel]()
    elif sel.startswith("custom:"):
        problem = parse_problem_config(sel.split(":", 1)[1])
    elif sel.startswith("tabular:"):
        game = parse_tabular_game(sel.split(":", 1)[1])
        return game, None, None, None
    elif sel.startswith("random:"):
        n = int(sel.split(":", 1)[1])
        game = random_game(config.seed, n, mu=0.9)
        return game, None, None, None
    else:
        raise UsageError(
            f"unknown problem {sel!r}; expected one of {sorted(BENCHMARKS)}, "
            "tabular:<path>, custom:<path>, or random:<n>"
        )
    if config.m < 4:
        raise UsageError("grid problems need m >= 4")
    grid = GridSpec(m=config.m, dim=problem.dim)
    game = build_game(problem, grid)
    return game, grid, exact_solution(problem, grid), problem


def _value_iter_report(game: GameInstance, epsilon: float, max_iters: int,
                       exact, level_points) -> tuple[np.ndarray, SolveReport]:
    t0 = time.perf_counter()
    result = value_iteration(game, np.zeros(game.n_states), epsilon, max_iters)
    res_inf, res_rms = residual(game, result.values)
    err_inf = err_rms = None
    if exact is not None:
        err_inf, err_rms = error_norms(result.values, exact)
    report = SolveReport(
        records=[OuterRecord(1, result.iterations, [], res_inf, res_rms,
                             err_inf, err_rms, time.perf_counter() - t0)],
        termination="residual" if result.converged else "max_iters",
        converged=result.converged,
        initial_policy="value-iteration",
        level_points=level_points,
    )
    return result.values, report


def run(config: RunConfig, out=sys.stdout) -> int:
    """Build the configured problem, solve it, write outputs.

    Returns the process exit status.
    """
    if config.solver not in SOLVERS:
        raise UsageError(f"unknown solver {config.solver!r}; expected one of {SOLVERS}")
    game, grid, exact, problem = _load_problem(config)
    h = grid.h if grid is not None else None
    level_points = grid.m + 1 if grid is not None else game.n_states

    if config.solver == "famgpi":
        if problem is None:
            raise UsageError("famgpi needs a grid problem")
        try:
            v, policies, reports = fmg_solve(
                problem, config.m, n_coarse_levels=config.fmg_levels,
                c=config.fmg_c, config=config.pi_config(h),
            )
        except LevelNonConvergence as exc:
            for rep in exc.reports:
                print_report(rep, out)
            out.write(f"error: {exc}\n")
            return 2
        converged = True
    elif config.solver == "value-iter":
        v, report = _value_iter_report(
            game, config.resolve_epsilon(h), config.max_inner, exact, level_points)
        alpha, _ = improve_max_with_values(game, v)
        beta = improve_min(game, alpha, v)
        policies = PolicyPair(alpha, beta)
        reports = [report]
        converged = report.converged
    else:
        v, policies, report = solve_game(
            game, config=config.pi_config(h), exact=exact, level_points=level_points)
        reports = [report]
        converged = report.converged

    for rep in reports:
        print_report(rep, out)
    if config.csv_path:
        emit_csv(reports, config.csv_path)
    if config.dump_path:
        if grid is None:
            raise UsageError("grid dumps need a grid problem")
        emit_grid_dump(v, policies, grid, config.dump_path)
    return 0 if converged else 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gamemg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="solve a benchmark or user game")
    runp.add_argument("problem", help="isaacs-sin | stopping-parabola | double-stop "
                                      "| tabular:<path> | custom:<path> | random:<n>")
    runp.add_argument("--m", type=int, default=64, help="subdivisions per axis")
    runp.add_argument("--solver", default="amgpi", choices=SOLVERS)
    runp.add_argument("--epsilon", default="1e-10",
                      help="residual threshold; accepts e.g. 0.001h2")
    runp.add_argument("--fmg-c", type=float, default=1e-2,
                      help="coarse-level threshold constant for famgpi")
    runp.add_argument("--fmg-levels", type=int, default=None,
                      help="number of coarse levels (default: down to m=4)")
    runp.add_argument("--theta", type=float, default=0.25)
    runp.add_argument("--nu1", type=int, default=1)
    runp.add_argument("--nu2", type=int, default=1)
    runp.add_argument("--cycle", default="W", choices=["V", "W"])
    runp.add_argument("--amg-tol", type=float, default=1e-12)
    runp.add_argument("--max-outer", type=int, default=2000)
    runp.add_argument("--max-inner", type=int, default=20000)
    runp.add_argument("--csv", dest="csv_path", default=None)
    runp.add_argument("--dump", dest="dump_path", default=None)
    runp.add_argument("--seed", type=int, default=0)

    amgp = sub.add_parser("amg-solve", help="solve one linear system with multigrid")
    amgp.add_argument("matrix", help="Matrix Market coordinate file")
    amgp.add_argument("--rhs", default=None, help="text file, one value per row (default: ones)")
    amgp.add_argument("--out", default=None, help="write the solution vector here")
    amgp.add_argument("--tol", type=float, default=1e-12)
    amgp.add_argument("--theta", type=float, default=0.25)
    amgp.add_argument("--nu1", type=int, default=1)
    amgp.add_argument("--nu2", type=int, default=1)
    amgp.add_argument("--cycle", default="W", choices=["V", "W"])
    amgp.add_argument("--max-cycles", type=int, default=100)
    return parser


def run_amg_solve(args, out=sys.stdout) -> int:
    matrix = read_matrix_market(args.matrix)
    if matrix.n_rows != matrix.n_cols:
        raise UsageError("amg-solve needs a square matrix")
    if args.rhs is not None:
        rhs = np.loadtxt(args.rhs, ndmin=1)
        if rhs.shape != (matrix.n_rows,):
            raise UsageError("right-hand side length does not match the matrix")
    else:
        rhs = np.ones(matrix.n_rows)
    config = AmgConfig(theta=args.theta, nu1=args.nu1, nu2=args.nu2,
                       gamma=1 if args.cycle == "V" else 2,
                       tol=args.tol, max_cycles=args.max_cycles)
    hierarchy = setup_hierarchy(matrix, config)
    result = amg_solve(hierarchy, rhs)
    out.write(f"levels: {hierarchy.level_sizes()}\n")
    out.write(f"cycles: {result.cycles}  residual: {result.residual_norm:.3e}\n")
    if args.out:
        np.savetxt(args.out, result.u)
    return 0 if result.converged else 2


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "amg-solve":
            return run_amg_solve(args)
        config = RunConfig(
            problem=args.problem, m=args.m, solver=args.solver,
            epsilon=args.epsilon, fmg_c=args.fmg_c, fmg_levels=args.fmg_levels,
            theta=args.theta, nu1=args.nu1, nu2=args.nu2, cycle=args.cycle,
            amg_tol=args.amg_tol, max_outer=args.max_outer,
            max_inner=args.max_inner, csv_path=args.csv_path,
            dump_path=args.dump_path, seed=args.seed,
        )
        return run(config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
