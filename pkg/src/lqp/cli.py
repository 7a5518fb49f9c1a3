"""Benchmark harness: single runs, problem listing, and batch sweeps.

File outputs are plain text. Histories go to CSV with a fixed header, run
reports to line-oriented ``key: value`` records, and batch sweeps add a
performance-profile file with one ``key=value`` token row per problem,
solver, and metric. Floats are written with repr, which round-trips doubles
exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baselines import penalty_gradient_descent, run_gauss_newton
from .errors import ConfigError, LqpError, UnknownProblemError
from .library import DEFAULT_REGISTRY, ProblemRegistry
from .model import NlpProblem
from .penalty import PenaltyParams
from .rho_search import RhoSearchConfig, solve_with_trial_rho
from .solver import SolveResult, SolverConfig, solve

__all__ = [
    "HISTORY_HEADER",
    "RunReport",
    "RateDiagnostic",
    "run",
    "list_problems",
    "batch",
    "write_history",
    "read_history",
    "write_report",
    "parse_report",
    "main",
    "console_entry",
]

log = logging.getLogger(__name__)

HISTORY_HEADER = ["k", "f", "feas_norm", "penalty", "beta", "delta_x_norm",
                  "kkt_stationarity", "backtracks", "time"]

SOLVER_NAMES = ("lqp", "lqp-trial-rho", "gd", "gauss-newton")

CONVERGED_STATUSES = ("ConvergedObjFeas", "ConvergedKkt")

# Minimum iteration count before a rate fit is attempted, and the r^2 below
# which the fit is reported as inconclusive.
RATE_MIN_ITERS = 10
RATE_MIN_R2 = 0.8


@dataclass(frozen=True)
class RunReport:
    """Summary of one (problem, solver) run, one row of a benchmark table."""

    problem: str
    n: int
    m: int
    solver: str
    iters: int
    cpu_seconds: float
    f_final: float
    feas_final: float
    status: str
    rho_used: float


@dataclass(frozen=True)
class RateDiagnostic:
    """Empirical convergence-rate fit against a reference solution.

    model is "linear" when log error decays best against the iteration
    index, "sublinear" when it decays best against log k, and
    "inconclusive" when neither fit explains the data. fit_parameter is the
    slope of the chosen fit.
    """

    model: str
    fit_parameter: float
    r_squared: float


def rate_diagnostic(result: SolveResult, problem: NlpProblem) -> Optional[RateDiagnostic]:
    """Fit the iterate error decay; None when the fit is not applicable.

    Needs a reference solution, at least RATE_MIN_ITERS iterations, and
    stored iterates.
    """
    ref = problem.reference_solution
    history = result.history
    if ref is None or not history or history[-1].k < RATE_MIN_ITERS:
        return None
    ks, errs = [], []
    for rec in history:
        if rec.x is None or rec.k < 1:
            continue
        e = float(np.linalg.norm(rec.x - ref.x))
        if e > 0.0:
            ks.append(float(rec.k))
            errs.append(e)
    if len(ks) < 5:
        return None
    ks = np.asarray(ks)
    log_e = np.log(np.asarray(errs))

    def fit(abscissa):
        coef = np.polyfit(abscissa, log_e, 1)
        pred = np.polyval(coef, abscissa)
        ss_res = float(np.sum((log_e - pred) ** 2))
        ss_tot = float(np.sum((log_e - log_e.mean()) ** 2))
        if ss_tot == 0.0:
            return float(coef[0]), 0.0
        return float(coef[0]), 1.0 - ss_res / ss_tot

    slope_lin, r2_lin = fit(ks)
    slope_sub, r2_sub = fit(np.log(ks))
    if max(r2_lin, r2_sub) < RATE_MIN_R2:
        return RateDiagnostic("inconclusive", 0.0, max(r2_lin, r2_sub))
    if r2_lin >= r2_sub:
        return RateDiagnostic("linear", slope_lin, r2_lin)
    return RateDiagnostic("sublinear", slope_sub, r2_sub)


def write_history(path, history):
    """Write solver history rows to CSV under the fixed header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_HEADER)
        for rec in history:
            writer.writerow([
                rec.k, repr(rec.f), repr(rec.feas_norm), repr(rec.penalty),
                repr(rec.beta), repr(rec.delta_x_norm),
                repr(rec.kkt_stationarity), rec.backtrack_count,
                repr(rec.cumulative_time),
            ])


def read_history(path):
    """Read a history CSV back into a list of per-row dicts."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HISTORY_HEADER:
            raise ValueError(f"unexpected history header {reader.fieldnames}")
        rows = []
        for row in reader:
            parsed = {key: float(row[key]) for key in HISTORY_HEADER}
            parsed["k"] = int(row["k"])
            parsed["backtracks"] = int(row["backtracks"])
            rows.append(parsed)
    return rows


def write_report(path, report: RunReport, rate: Optional[RateDiagnostic] = None):
    path = Path(path)
    path.write_text(format_report(report, rate))


def format_report(report: RunReport, rate: Optional[RateDiagnostic] = None) -> str:
    lines = [
        f"problem: {report.problem}",
        f"n: {report.n}",
        f"m: {report.m}",
        f"solver: {report.solver}",
        f"status: {report.status}",
        f"iters: {report.iters}",
        f"cpu_seconds: {report.cpu_seconds!r}",
        f"f_final: {report.f_final!r}",
        f"feas_final: {report.feas_final!r}",
        f"rho_used: {report.rho_used!r}",
    ]
    if rate is not None:
        lines += [
            f"rate_model: {rate.model}",
            f"rate_fit_parameter: {rate.fit_parameter!r}",
            f"rate_r_squared: {rate.r_squared!r}",
        ]
    return "\n".join(lines) + "\n"


def parse_report(path) -> dict:
    """Parse a report file into a str-to-str dict."""
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(":")
        out[key.strip()] = value.strip()
    return out


def _slug(name: str) -> str:
    return name.replace("/", "-")


def _execute(problem: NlpProblem, solver: str, sconfig: SolverConfig,
             rconfig: RhoSearchConfig, step_size: float):
    """Dispatch one run. Returns (SolveResult, rho_used)."""
    if problem.x0 is None:
        raise ConfigError(f"problem {problem.name!r} has no starting point")
    if solver == "lqp":
        return solve(problem, problem.x0, sconfig), sconfig.rho
    if solver == "lqp-trial-rho":
        outcome = solve_with_trial_rho(problem, problem.x0, rconfig)
        return outcome.result, outcome.rho_final
    if solver == "gd":
        result = penalty_gradient_descent(
            problem, problem.x0, PenaltyParams(sconfig.rho), step_size,
            sconfig.max_outer_iters, sconfig,
        )
        return result, sconfig.rho
    if solver == "gauss-newton":
        try:
            return run_gauss_newton(problem, problem.x0, sconfig), sconfig.rho
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown solver {solver!r}; choose from {SOLVER_NAMES}")


def _report_from(problem, solver, result: SolveResult, rho_used) -> RunReport:
    last = result.history[-1]
    return RunReport(
        problem=problem.name, n=problem.n, m=problem.m, solver=solver,
        iters=last.k, cpu_seconds=last.cumulative_time,
        f_final=last.f, feas_final=last.feas_norm,
        status=result.status.value, rho_used=float(rho_used),
    )


def run(problem_name: str, solver_name: str, sconfig: Optional[SolverConfig] = None,
        rconfig: Optional[RhoSearchConfig] = None, out_dir=None, size=None,
        seed=None, step_size: float = 1e-3,
        registry: Optional[ProblemRegistry] = None) -> RunReport:
    """Run one solver on one library problem and optionally write artifacts.

    Artifacts are <problem>__<solver>.history.csv and .report.txt inside
    out_dir. Raises UnknownProblemError for names not in the registry and
    propagates solver errors.
    """
    registry = registry or DEFAULT_REGISTRY
    sconfig = sconfig or SolverConfig()
    rconfig = rconfig or RhoSearchConfig(inner=sconfig)
    problem = registry.build(problem_name, size=size, seed=seed)
    result, rho_used = _execute(problem, solver_name, sconfig, rconfig, step_size)
    report = _report_from(problem, solver_name, result, rho_used)
    rate = rate_diagnostic(result, problem)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{_slug(problem_name)}__{solver_name}"
        write_history(out / f"{stem}.history.csv", result.history)
        write_report(out / f"{stem}.report.txt", report, rate)
    return report


def list_problems(registry: Optional[ProblemRegistry] = None):
    """Rows (name, n, m, has_reference) for the registry's entries."""
    registry = registry or DEFAULT_REGISTRY
    return registry.rows()


def _format_listing(rows) -> str:
    header = ("name", "n", "m", "reference")
    table = [header] + [
        (name, str(n), str(m), "yes" if ref else "no") for name, n, m, ref in rows
    ]
    widths = [max(len(r[i]) for r in table) for i in range(4)]
    return "\n".join(
        "  ".join(col.ljust(widths[i]) for i, col in enumerate(r)).rstrip()
        for r in table
    ) + "\n"


def batch(problem_names: Sequence[str], solver_names: Sequence[str],
          sconfig: Optional[SolverConfig] = None,
          rconfig: Optional[RhoSearchConfig] = None, out_dir=None,
          size=None, seed=None, step_size: float = 1e-3,
          registry: Optional[ProblemRegistry] = None):
    """Run every problem/solver pair, collecting reports and a profile.

    Individual failures are recorded (their partial data when available) and
    the batch continues. Output is deterministic for fixed seeds and
    configs, apart from the timing columns.
    """
    registry = registry or DEFAULT_REGISTRY
    sconfig = sconfig or SolverConfig()
    rconfig = rconfig or RhoSearchConfig(inner=sconfig)
    for name in problem_names:
        if name not in registry.names():
            raise UnknownProblemError(f"unknown problem {name!r}")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    reports = []
    for pname in problem_names:
        problem = registry.build(pname, size=size, seed=seed)
        for sname in solver_names:
            try:
                result, rho_used = _execute(problem, sname, sconfig, rconfig, step_size)
            except LqpError as exc:
                partial = getattr(exc, "result", None)
                log.warning("run %s/%s failed: %s", pname, sname, exc)
                if partial is not None and partial.history:
                    rep = _report_from(problem, sname, partial, sconfig.rho)
                else:
                    rep = RunReport(
                        problem=problem.name, n=problem.n, m=problem.m,
                        solver=sname, iters=0, cpu_seconds=math.nan,
                        f_final=math.nan, feas_final=math.nan,
                        status=type(exc).__name__, rho_used=sconfig.rho,
                    )
                reports.append(rep)
                continue
            reports.append(_report_from(problem, sname, result, rho_used))
            if out is not None:
                stem = f"{_slug(pname)}__{sname}"
                write_history(out / f"{stem}.history.csv", result.history)

    if out is not None:
        _write_reports_csv(out / "reports.csv", reports)
        (out / "profile.txt").write_text(format_profile(reports))
    return reports


def _write_reports_csv(path, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        names = [f.name for f in fields(RunReport)]
        writer.writerow(names)
        for rep in reports:
            writer.writerow([
                rep.problem, rep.n, rep.m, rep.solver, rep.iters,
                repr(rep.cpu_seconds), repr(rep.f_final), repr(rep.feas_final),
                rep.status, repr(rep.rho_used),
            ])


def read_reports_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            rows.append(RunReport(
                problem=row["problem"], n=int(row["n"]), m=int(row["m"]),
                solver=row["solver"], iters=int(row["iters"]),
                cpu_seconds=float(row["cpu_seconds"]),
                f_final=float(row["f_final"]),
                feas_final=float(row["feas_final"]),
                status=row["status"], rho_used=float(row["rho_used"]),
            ))
    return rows


def format_profile(reports) -> str:
    """Performance-profile rows: metric value over the per-problem best.

    A run is solved when its status is a converged one; runs that timed out
    or died keep no ratio ("unsolved"). The last column marks objectives
    within 1 percent (relative, shifted by 1) of the best converged value on
    that problem.
    """
    lines = []
    problems = []
    for rep in reports:
        if rep.problem not in problems:
            problems.append(rep.problem)
    for metric in ("cpu_seconds", "iters"):
        for pname in problems:
            group = [r for r in reports if r.problem == pname]
            usable = [r for r in group
                      if r.status not in ("TimeOut",) and math.isfinite(r.f_final)]
            values = {id(r): float(getattr(r, metric)) for r in usable}
            best = min(values.values()) if values else math.nan
            solved = [r for r in group if r.status in CONVERGED_STATUSES]
            best_f = min((r.f_final for r in solved), default=math.nan)
            for rep in group:
                if id(rep) in values and best > 0:
                    ratio = repr(values[id(rep)] / best)
                elif id(rep) in values and best == 0:
                    ratio = "1.0" if values[id(rep)] == 0 else "unsolved"
                else:
                    ratio = "unsolved"
                if math.isfinite(rep.f_final) and math.isfinite(best_f):
                    near = "yes" if abs(rep.f_final - best_f) <= 1e-2 * (1.0 + abs(best_f)) else "no"
                else:
                    near = "na"
                lines.append(
                    f"metric={metric} problem={rep.problem} solver={rep.solver} "
                    f"value={getattr(rep, metric)!r} ratio={ratio} "
                    f"solved={'yes' if rep.status in CONVERGED_STATUSES else 'no'} "
                    f"obj_within_1pct={near}"
                )
    return "\n".join(lines) + "\n"


def parse_profile(path):
    """Rows of the profile file as dicts of the key=value tokens."""
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rows.append(dict(tok.split("=", 1) for tok in line.split()))
    return rows


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; route that through the
    # config-error path instead so usage mistakes map to exit code 1.
    def error(self, message):
        raise ConfigError(message)


def _add_common_flags(p):
    p.add_argument("--rho", type=float, help="penalty level")
    p.add_argument("--beta-mode", choices=["adaptive", "fixed"], dest="beta_mode")
    p.add_argument("--beta-fixed", type=float, dest="beta_fixed")
    p.add_argument("--beta-min", type=float, dest="beta_min")
    p.add_argument("--beta-init", type=float, dest="beta_init")
    p.add_argument("--mu", type=float, help="backtrack growth factor")
    p.add_argument("--eps-obj", type=float, dest="eps_obj")
    p.add_argument("--eps-feas", type=float, dest="eps_feas")
    p.add_argument("--eps-kkt", type=float, dest="eps_kkt")
    p.add_argument("--max-iters", type=int, dest="max_outer_iters")
    p.add_argument("--max-backtracks", type=int, dest="max_backtracks")
    p.add_argument("--max-time", type=float, dest="max_wall_time")
    p.add_argument("--tau", type=float, help="trial-rho growth factor")
    p.add_argument("--rho0", type=float, help="trial-rho base level")
    p.add_argument("--max-rounds", type=int, dest="max_rounds")
    p.add_argument("--step-size", type=float, dest="step_size",
                   help="gradient-descent step size")
    p.add_argument("--size", type=int, help="problem size parameter")
    p.add_argument("--seed", type=int, help="problem generator seed")
    p.add_argument("--config", help="JSON file with config overrides")
    p.add_argument("--out-dir", dest="out_dir", default="runs",
                   help="directory for run artifacts")


_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}
_SEARCH_KEYS = {"rho0", "tau", "max_rounds", "step_size"}


def _assemble_configs(args):
    """defaults < config file < command-line flags."""
    merged = {}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - _SOLVER_KEYS - _SEARCH_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    for key in _SOLVER_KEYS | _SEARCH_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value

    solver_kwargs = {k: v for k, v in merged.items() if k in _SOLVER_KEYS}
    try:
        sconfig = SolverConfig(**solver_kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    rconfig = RhoSearchConfig(
        rho0=merged.get("rho0", 1e3),
        tau=merged.get("tau", 10.0),
        eps_feas_target=sconfig.eps_feas,
        max_rounds=merged.get("max_rounds", 12),
        inner=sconfig,
    )
    return sconfig, rconfig, float(merged.get("step_size", 1e-3))


def main(argv=None) -> int:
    """CLI entry. Exit codes: 0 ok, 1 config, 2 solver error, 3 unknown problem."""
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = _Parser(prog="lqp", description="penalty-method benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one solver on one problem")
    run_p.add_argument("problem")
    run_p.add_argument("solver")
    _add_common_flags(run_p)

    sub.add_parser("list", help="list library problems")

    batch_p = sub.add_parser("batch", help="run a problem/solver sweep")
    batch_p.add_argument("--problems", help="comma-separated problem names")
    batch_p.add_argument("--solvers", default="lqp",
                         help="comma-separated solver names")
    _add_common_flags(batch_p)

    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "list":
            sys.stdout.write(_format_listing(list_problems()))
            return 0
        sconfig, rconfig, step_size = _assemble_configs(args)
        if args.command == "run":
            if args.solver not in SOLVER_NAMES:
                raise ConfigError(
                    f"unknown solver {args.solver!r}; choose from {SOLVER_NAMES}")
            report = run(args.problem, args.solver, sconfig, rconfig,
                         out_dir=args.out_dir, size=args.size, seed=args.seed,
                         step_size=step_size)
            sys.stdout.write(format_report(report))
            return 0
        if args.command == "batch":
            problems = (args.problems.split(",") if args.problems
                        else list(DEFAULT_REGISTRY.names()))
            solvers = args.solvers.split(",")
            for s in solvers:
                if s not in SOLVER_NAMES:
                    raise ConfigError(
                        f"unknown solver {s!r}; choose from {SOLVER_NAMES}")
            reports = batch(problems, solvers, sconfig, rconfig,
                            out_dir=args.out_dir, size=args.size,
                            seed=args.seed, step_size=step_size)
            for rep in reports:
                print(f"{rep.problem} {rep.solver} {rep.status} "
                      f"iters={rep.iters} f={rep.f_final:.6g} "
                      f"feas={rep.feas_final:.3e}")
            return 0
    except UnknownProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LqpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def console_entry():
    raise SystemExit(main())
