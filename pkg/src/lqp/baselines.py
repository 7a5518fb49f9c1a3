"""Reference methods the penalty solver is benchmarked against.

Gauss-Newton and Levenberg-Marquardt are the rho = 1 specializations of the
linearized penalty step for problems with a vanishing objective, so their
iterates must match lqp_step to the last bit when fed the same data. The
penalty gradient-descent baseline exists to show what an explicit step size
costs at large rho.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from .errors import DivergenceError, EvaluationError
from .linalg import assemble_normal_matrix, solve_spd
from .model import NlpProblem
from .penalty import PenaltyParams
from .solver import (
    HISTORY_X_LIMIT,
    EvalCounts,
    IterateRecord,
    KktResidual,
    SolveResult,
    SolveStatus,
    SolverConfig,
    _counted_problem,
    _stop_status,
)

__all__ = [
    "gauss_newton_step",
    "levenberg_marquardt_step",
    "penalty_gradient_descent",
    "run_gauss_newton",
]

# Consecutive penalty increases tolerated before gradient descent gives up.
DIVERGENCE_STREAK = 10


def _require_null_objective(problem: NlpProblem, x):
    if float(problem.eval_f(x)) != 0.0:
        raise ValueError(
            f"problem {problem.name!r} has a nonzero objective at x; "
            "this baseline handles pure constraint residuals only"
        )


def gauss_newton_step(problem: NlpProblem, x) -> np.ndarray:
    """Undamped Gauss-Newton step x - (J^T J)^{-1} J^T F.

    Requires f identically zero (checked at x) and J^T J invertible;
    a singular Gram matrix raises NotPositiveDefiniteError.
    """
    x = np.asarray(x, dtype=float)
    _require_null_objective(problem, x)
    F = np.asarray(problem.eval_F(x), dtype=float)
    J = np.asarray(problem.eval_JF(x), dtype=float)
    H = assemble_normal_matrix(J, 1.0, 0.0)
    return x - solve_spd(H, J.T @ F)


def levenberg_marquardt_step(problem: NlpProblem, x, beta: float) -> np.ndarray:
    """Damped least-squares step x - (J^T J + beta I)^{-1} J^T F, beta > 0."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    x = np.asarray(x, dtype=float)
    _require_null_objective(problem, x)
    F = np.asarray(problem.eval_F(x), dtype=float)
    J = np.asarray(problem.eval_JF(x), dtype=float)
    H = assemble_normal_matrix(J, 1.0, beta)
    return x - solve_spd(H, J.T @ F)


def _finite_or_nan(value):
    v = float(value)
    return v if np.isfinite(v) else np.nan


def penalty_gradient_descent(problem: NlpProblem, x0, params: PenaltyParams,
                             step_size: float, max_iters: int,
                             config: Optional[SolverConfig] = None) -> SolveResult:
    """Fixed-step gradient descent on the penalty, with the solver's bookkeeping.

    Stops by the same criteria as the main solver (config supplies the
    tolerances; its rho must agree with params). Ten consecutive iterations
    of penalty increase, or a non-finite penalty, raise DivergenceError with
    the partial result attached. History rows carry beta = 0 since no
    damping is involved.
    """
    if not step_size > 0:
        raise ValueError(f"step_size must be positive, got {step_size}")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if config is None:
        config = SolverConfig(rho=params.rho)
    if config.rho != params.rho:
        raise ValueError("config.rho and params.rho disagree")

    rho = params.rho
    counted, counts = _counted_problem(problem)
    x = np.array(x0, dtype=float)
    keep_x = problem.n <= HISTORY_X_LIMIT
    t_start = time.perf_counter()
    history: list[IterateRecord] = []

    def evaluate(z):
        # Overflow is expected on a diverging run; keep the values as inf/nan
        # and let the streak logic decide instead of warning on every step.
        with np.errstate(all="ignore"):
            f = _finite_or_nan(counted.eval_f(z))
            F = np.asarray(counted.eval_F(z), dtype=float)
            grad = np.asarray(counted.eval_grad_f(z), dtype=float)
            J = np.asarray(counted.eval_JF(z), dtype=float)
            feas = float(np.linalg.norm(F))
            pen = f + 0.5 * rho * feas * feas
            g = grad + rho * (J.T @ F)
        return f, F, feas, pen, g

    def partial_result(status):
        with np.errstate(all="ignore"):
            mult = rho * np.asarray(counted.eval_F(x), dtype=float)
        return SolveResult(status, x.copy(), mult, tuple(history), counts)

    f, F, feas, pen, g = evaluate(x)
    g_norm = float(np.linalg.norm(g))
    history.append(IterateRecord(
        k=0, x=x.copy() if keep_x else None, f=f, feas_norm=feas, penalty=pen,
        beta=0.0, delta_x_norm=0.0, kkt_stationarity=g_norm, backtrack_count=0,
        cumulative_time=time.perf_counter() - t_start,
    ))
    status = _stop_status(history, KktResidual(g_norm, feas), config)
    if status is not None:
        return SolveResult(status, x.copy(), rho * F, tuple(history), counts)

    status = SolveStatus.MAX_ITERS
    streak = 0
    for k in range(1, max_iters + 1):
        if time.perf_counter() - t_start > config.max_wall_time:
            status = SolveStatus.TIMEOUT
            break
        with np.errstate(all="ignore"):
            x_next = x - step_size * g
        if not np.all(np.isfinite(x_next)):
            raise DivergenceError(
                f"iterate became non-finite at step size {step_size:.3e}",
                result=partial_result(SolveStatus.EVALUATION_ERROR),
            )
        try:
            f_t, F_t, feas_t, pen_t, g_t = evaluate(x_next)
        except EvaluationError as exc:
            exc.result = partial_result(SolveStatus.EVALUATION_ERROR)
            raise
        if not np.isfinite(pen_t) or pen_t > pen:
            streak += 1
            if streak >= DIVERGENCE_STREAK:
                raise DivergenceError(
                    f"penalty increased for {streak} consecutive iterations "
                    f"at step size {step_size:.3e}",
                    result=partial_result(SolveStatus.EVALUATION_ERROR),
                )
        else:
            streak = 0
        g_norm_t = float(np.linalg.norm(g_t))
        history.append(IterateRecord(
            k=k, x=x_next.copy() if keep_x else None, f=f_t, feas_norm=feas_t,
            penalty=pen_t, beta=0.0,
            delta_x_norm=float(step_size * np.linalg.norm(g)),
            kkt_stationarity=g_norm_t, backtrack_count=0,
            cumulative_time=time.perf_counter() - t_start,
        ))
        x, f, F, feas, pen, g, g_norm = x_next, f_t, F_t, feas_t, pen_t, g_t, g_norm_t
        st = _stop_status(history, KktResidual(g_norm, feas), config)
        if st is not None:
            status = st
            break
    return SolveResult(status, x.copy(), rho * F, tuple(history), counts)


def run_gauss_newton(problem: NlpProblem, x0, config: SolverConfig) -> SolveResult:
    """Iterate Gauss-Newton steps with the solver's history and stopping.

    Only valid for problems with f identically zero. Penalty bookkeeping in
    the records uses config.rho so rows stay comparable across solvers.
    """
    rho = config.rho
    counted, counts = _counted_problem(problem)
    x = np.array(x0, dtype=float)
    _require_null_objective(problem, x)
    keep_x = problem.n <= HISTORY_X_LIMIT
    t_start = time.perf_counter()
    history: list[IterateRecord] = []

    def record(k, z, delta_norm):
        F = np.asarray(counted.eval_F(z), dtype=float)
        J = np.asarray(counted.eval_JF(z), dtype=float)
        feas = float(np.linalg.norm(F))
        g_norm = float(np.linalg.norm(rho * (J.T @ F)))
        history.append(IterateRecord(
            k=k, x=z.copy() if keep_x else None, f=0.0, feas_norm=feas,
            penalty=0.5 * rho * feas * feas, beta=0.0, delta_x_norm=delta_norm,
            kkt_stationarity=g_norm, backtrack_count=0,
            cumulative_time=time.perf_counter() - t_start,
        ))
        return F, feas, g_norm

    F, feas, g_norm = record(0, x, 0.0)
    status = _stop_status(history, KktResidual(g_norm, feas), config)
    if status is not None:
        return SolveResult(status, x.copy(), rho * F, tuple(history), counts)

    status = SolveStatus.MAX_ITERS
    for k in range(1, config.max_outer_iters + 1):
        if time.perf_counter() - t_start > config.max_wall_time:
            status = SolveStatus.TIMEOUT
            break
        x_next = gauss_newton_step(counted, x)
        delta_norm = float(np.linalg.norm(x_next - x))
        F, feas, g_norm = record(k, x_next, delta_norm)
        x = x_next
        st = _stop_status(history, KktResidual(g_norm, feas), config)
        if st is not None:
            status = st
            break
    return SolveResult(status, x.copy(), rho * F, tuple(history), counts)
