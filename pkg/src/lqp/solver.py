"""Outer loop of the linearized quadratic penalty method.

Each iteration takes one proximal linearized step on the penalty
P(x) = f(x) + (rho/2)||F(x)||^2 and accepts it only if

    P(x_next) <= P(x) - (beta/2) ||x_next - x||^2.

In adaptive mode the damping beta is warm-started at max(beta_prev/mu,
beta_min) and geometrically increased until the test passes. In fixed mode a
single beta is used throughout and a violated test is an error, since with a
large enough fixed beta the inequality is guaranteed for smooth data.

Stopping follows the benchmark convention: quit when the objective change
drops below eps_obj and the constraint norm below eps_feas, or, when eps_kkt
is set, when both members of the stationarity/feasibility pair fall below
it. The multiplier estimate reported at the end is rho * F(x_final).
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    BacktrackFailureError,
    ConfigError,
    EvaluationError,
    FixedBetaDescentError,
    MissingConstantsError,
)
from .model import NlpProblem
from .penalty import (
    PenaltyParams,
    StepOutcome,
    _PointData,
    _eval_point,
    _objective_and_residual,
    _step_kernel,
    descent_check,
)
from .linalg import _scaled_gram

__all__ = [
    "SolveStatus",
    "SolverConfig",
    "IterateRecord",
    "EvalCounts",
    "KktResidual",
    "SolveResult",
    "backtrack",
    "solve",
    "stopping_criterion",
    "kkt_residuals",
    "estimate_gamma",
]

log = logging.getLogger(__name__)

# Full iterates are kept in the history only below this dimension.
HISTORY_X_LIMIT = 100


class SolveStatus(str, Enum):
    CONVERGED_OBJ_FEAS = "ConvergedObjFeas"
    CONVERGED_KKT = "ConvergedKkt"
    MAX_ITERS = "MaxIters"
    TIMEOUT = "TimeOut"
    BACKTRACK_FAILURE = "BacktrackFailure"
    EVALUATION_ERROR = "EvaluationError"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for one solve.

    Defaults follow the benchmark protocol: rho at the bottom of the usual
    1e7..1e9 range, objective tolerance 1e-3, feasibility tolerance 1e-5,
    fixed-mode beta 1e4, wall clock capped at thirty minutes. eps_kkt is
    disabled unless set.
    """

    rho: float = 1e7
    beta_min: float = 1e-4
    beta_init: float = 1.0
    mu: float = 2.0
    beta_mode: str = "adaptive"
    beta_fixed: float = 1e4
    eps_obj: float = 1e-3
    eps_feas: float = 1e-5
    eps_kkt: Optional[float] = None
    max_outer_iters: int = 10000
    max_backtracks: int = 60
    max_wall_time: float = 1800.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.rho > 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if not self.beta_min > 0:
            raise ConfigError(f"beta_min must be positive, got {self.beta_min}")
        if not self.beta_init > 0:
            raise ConfigError(f"beta_init must be positive, got {self.beta_init}")
        if not self.mu > 1:
            raise ConfigError(f"mu must exceed 1, got {self.mu}")
        if self.beta_mode not in ("adaptive", "fixed"):
            raise ConfigError(f"beta_mode must be 'adaptive' or 'fixed', got {self.beta_mode!r}")
        if self.beta_mode == "fixed" and self.beta_fixed < self.beta_min:
            raise ConfigError("beta_fixed must be at least beta_min")
        if not self.eps_obj > 0 or not self.eps_feas > 0:
            raise ConfigError("tolerances must be positive")
        if self.eps_kkt is not None and not self.eps_kkt > 0:
            raise ConfigError("eps_kkt must be positive when set")
        if self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters must be at least 1")
        if self.max_backtracks < 1:
            raise ConfigError("max_backtracks must be at least 1")
        if not self.max_wall_time > 0:
            raise ConfigError("max_wall_time must be positive")


@dataclass(frozen=True)
class IterateRecord:
    """One row of solver history.

    x is the full iterate for small problems (n <= HISTORY_X_LIMIT), None
    otherwise. penalty equals f + (rho/2) * feas_norm^2 as computed by the
    solver, kkt_stationarity is the norm of grad f + J^T (rho F), which is
    also the penalty gradient norm at the iterate.
    """

    k: int
    x: Optional[np.ndarray]
    f: float
    feas_norm: float
    penalty: float
    beta: float
    delta_x_norm: float
    kkt_stationarity: float
    backtrack_count: int
    cumulative_time: float


@dataclass
class EvalCounts:
    """Number of calls made to each evaluator during a run."""

    f: int = 0
    grad_f: int = 0
    F: int = 0
    JF: int = 0


@dataclass(frozen=True)
class KktResidual:
    """Stationarity and feasibility norms at a primal/dual pair."""

    stationarity: float
    feasibility: float


@dataclass(frozen=True)
class SolveResult:
    status: SolveStatus
    x_final: np.ndarray
    multiplier: np.ndarray
    history: tuple
    evals: EvalCounts


def _counted_problem(problem: NlpProblem):
    counts = EvalCounts()

    def wrap(fun, name):
        def inner(x):
            setattr(counts, name, getattr(counts, name) + 1)
            return fun(x)
        return inner

    counted = dataclasses.replace(
        problem,
        eval_f=wrap(problem.eval_f, "f"),
        eval_grad_f=wrap(problem.eval_grad_f, "grad_f"),
        eval_F=wrap(problem.eval_F, "F"),
        eval_JF=wrap(problem.eval_JF, "JF"),
    )
    return counted, counts


def kkt_residuals(problem: NlpProblem, x, multiplier) -> KktResidual:
    """Stationarity ||grad f + J^T lam|| and feasibility ||F|| at (x, lam)."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(multiplier, dtype=float)
    grad = np.asarray(problem.eval_grad_f(x), dtype=float)
    J = np.asarray(problem.eval_JF(x), dtype=float)
    F = np.asarray(problem.eval_F(x), dtype=float)
    return KktResidual(
        stationarity=float(np.linalg.norm(grad + J.T @ lam)),
        feasibility=float(np.linalg.norm(F)),
    )


def estimate_gamma(problem: NlpProblem, history: Sequence[IterateRecord],
                   params: PenaltyParams) -> float:
    """Bound on ||penalty gradient at x_{k+1}|| / ||x_{k+1} - x_k||.

    Uses the problem's annotated smoothness constants together with the
    largest constraint norm seen so far in the history:

        L_f + rho * (L_J * max_feas + 4 * B_J^2) + beta_last,

    where L_f bounds the objective gradient's Lipschitz constant, L_J the
    Jacobian's, and B_J the Jacobian norm. Raises MissingConstantsError when
    the problem carries no constants.
    """
    consts = problem.known_constants
    if consts is None:
        raise MissingConstantsError(f"problem {problem.name!r} has no smoothness constants")
    if not history:
        raise ValueError("history must contain at least one record")
    max_feas = max(rec.feas_norm for rec in history)
    beta = history[-1].beta
    return (consts.grad_lipschitz
            + params.rho * (consts.jac_lipschitz * max_feas + 4.0 * consts.jac_bound ** 2)
            + beta)


def _stop_status(history, kkt: KktResidual, config: SolverConfig):
    # KKT test first: when a step degenerates to zero length this is the
    # branch that may still fire, and it outranks the objective test.
    if (config.eps_kkt is not None
            and kkt.stationarity <= config.eps_kkt
            and kkt.feasibility <= config.eps_kkt):
        return SolveStatus.CONVERGED_KKT
    if len(history) >= 2:
        df = abs(history[-1].f - history[-2].f)
        if df <= config.eps_obj and history[-1].feas_norm <= config.eps_feas:
            return SolveStatus.CONVERGED_OBJ_FEAS
    return None


def stopping_criterion(history: Sequence[IterateRecord], kkt: KktResidual,
                       config: SolverConfig) -> bool:
    """True when the run should stop at the latest record.

    Two routes: objective change at most eps_obj together with constraint
    norm at most eps_feas (needs two records), or both KKT residuals at most
    eps_kkt when that tolerance is enabled.
    """
    if not history:
        raise ValueError("history must contain at least one record")
    return _stop_status(history, kkt, config) is not None


def _backtrack_core(problem, x, data: _PointData, g, gram, rho,
                    beta_prev, config: SolverConfig, observer=None):
    """Scan beta upward from the warm start until the descent test passes.

    Returns (outcome, beta, tries, f, F, feas, penalty) for the accepted
    candidate, with the candidate's objective/constraint evaluations included
    so the caller does not repeat them.
    """
    beta = max(beta_prev / config.mu, config.beta_min)
    g_norm = float(np.linalg.norm(g))
    for tries in range(1, config.max_backtracks + 1):
        outcome = _step_kernel(data, x, rho, beta, g, gram)
        if observer is not None:
            observer(outcome, g_norm)
        f_t, F_t, feas_t, pen_t = _objective_and_residual(problem, outcome.x_next, rho)
        delta_sq = float(outcome.delta_x @ outcome.delta_x)
        if descent_check(data.penalty, pen_t, beta, delta_sq):
            return outcome, beta, tries, f_t, F_t, feas_t, pen_t
        beta *= config.mu
    raise BacktrackFailureError(
        f"no step accepted after {config.max_backtracks} trials (beta reached {beta:.3e})"
    )


def backtrack(problem: NlpProblem, x, params: PenaltyParams, beta_prev: float,
              config: SolverConfig):
    """One damping search at x. Returns (x_next, beta_used, tries).

    beta_prev must be at least config.beta_min; the first trial value is
    max(beta_prev / mu, beta_min).
    """
    if beta_prev < config.beta_min:
        raise ValueError(f"beta_prev {beta_prev} is below beta_min {config.beta_min}")
    x = np.asarray(x, dtype=float)
    data = _eval_point(problem, x, params.rho)
    g = data.grad + params.rho * (data.J.T @ data.F)
    gram = _scaled_gram(data.J, params.rho)
    outcome, beta, tries, *_ = _backtrack_core(
        problem, x, data, g, gram, params.rho, beta_prev, config
    )
    return outcome.x_next, beta, tries


def solve(problem: NlpProblem, x0, config: SolverConfig, *,
          step_observer: Optional[Callable[[StepOutcome, float], None]] = None) -> SolveResult:
    """Run the penalty method from x0 until a stopping status is reached.

    Returns a SolveResult whose history has one record per accepted iterate
    (including the starting point as record 0). On BacktrackFailureError,
    FixedBetaDescentError, or EvaluationError the partial result is attached
    to the exception as ``result`` before it propagates.

    step_observer, when given, is called as observer(outcome, grad_norm) for
    every subproblem solve, accepted or not.
    """
    config.validate()
    params = PenaltyParams(rho=config.rho)
    rho = config.rho
    counted, counts = _counted_problem(problem)
    x = np.array(x0, dtype=float)
    if x.shape != (problem.n,):
        raise ConfigError(f"x0 has shape {x.shape}, expected ({problem.n},)")

    keep_x = problem.n <= HISTORY_X_LIMIT
    t_start = time.perf_counter()
    history: list[IterateRecord] = []

    def partial_result(status):
        mult = rho * data.F if data is not None else np.full(problem.m, np.nan)
        return SolveResult(status, x.copy(), mult, tuple(history), counts)

    data = None
    try:
        data = _eval_point(counted, x, rho)
    except EvaluationError as exc:
        exc.result = partial_result(SolveStatus.EVALUATION_ERROR)
        raise

    if data.feas ** 2 > 1.0:
        # The theory wants ||F(x0)||^2 <= min(1, 2 c0 / rho); report, never enforce.
        c0 = 0.5 * rho * data.feas ** 2
        log.warning(
            "starting constraint norm %.3e exceeds the theory's bound "
            "(||F(x0)||^2 = %.3e > 1, c0 = %.3e)", data.feas, data.feas ** 2, c0,
        )

    fixed_mode = config.beta_mode == "fixed"
    beta_prev = config.beta_fixed if fixed_mode else max(config.beta_init, config.beta_min)

    g = data.grad + rho * (data.J.T @ data.F)
    g_norm = float(np.linalg.norm(g))
    history.append(IterateRecord(
        k=0, x=x.copy() if keep_x else None, f=data.f, feas_norm=data.feas,
        penalty=data.penalty, beta=beta_prev, delta_x_norm=0.0,
        kkt_stationarity=g_norm, backtrack_count=0,
        cumulative_time=time.perf_counter() - t_start,
    ))
    status = _stop_status(history, KktResidual(g_norm, data.feas), config)
    if status is not None:
        return SolveResult(status, x.copy(), rho * data.F, tuple(history), counts)

    status = SolveStatus.MAX_ITERS
    try:
        for k in range(1, config.max_outer_iters + 1):
            if time.perf_counter() - t_start > config.max_wall_time:
                status = SolveStatus.TIMEOUT
                break
            gram = _scaled_gram(data.J, rho)
            if fixed_mode:
                beta_used = config.beta_fixed
                outcome = _step_kernel(data, x, rho, beta_used, g, gram)
                if step_observer is not None:
                    step_observer(outcome, g_norm)
                f_t, F_t, feas_t, pen_t = _objective_and_residual(counted, outcome.x_next, rho)
                tries = 1
                delta_sq = float(outcome.delta_x @ outcome.delta_x)
                if not descent_check(data.penalty, pen_t, beta_used, delta_sq):
                    raise FixedBetaDescentError(
                        f"descent test failed at iteration {k} with fixed beta {beta_used:.3e}"
                    )
            else:
                outcome, beta_used, tries, f_t, F_t, feas_t, pen_t = _backtrack_core(
                    counted, x, data, g, gram, rho, beta_prev, config, step_observer
                )
                beta_prev = beta_used

            x_next = outcome.x_next
            delta_norm = float(np.linalg.norm(outcome.delta_x))
            grad_t = np.asarray(counted.eval_grad_f(x_next), dtype=float)
            J_t = np.asarray(counted.eval_JF(x_next), dtype=float)
            if not (np.all(np.isfinite(grad_t)) and np.all(np.isfinite(J_t))):
                raise EvaluationError("non-finite derivative at accepted iterate", point=x_next)
            g_next = grad_t + rho * (J_t.T @ F_t)
            g_norm_next = float(np.linalg.norm(g_next))

            history.append(IterateRecord(
                k=k, x=x_next.copy() if keep_x else None, f=f_t, feas_norm=feas_t,
                penalty=pen_t, beta=beta_used, delta_x_norm=delta_norm,
                kkt_stationarity=g_norm_next, backtrack_count=tries,
                cumulative_time=time.perf_counter() - t_start,
            ))
            if problem.known_constants is not None:
                gamma = estimate_gamma(problem, history, params)
                assert g_norm_next <= gamma * delta_norm + 1e-9 * (1.0 + g_norm_next)

            x = x_next
            data = _PointData(f=f_t, grad=grad_t, F=F_t, J=J_t, feas=feas_t, penalty=pen_t)
            g, g_norm = g_next, g_norm_next

            st = _stop_status(history, KktResidual(g_norm, data.feas), config)
            if st is not None:
                status = st
                break
            # A zero-length step with neither test firing simply continues;
            # the objective branch picks it up next round when feasible,
            # otherwise the iteration cap ends the run.
    except (BacktrackFailureError, FixedBetaDescentError) as exc:
        exc.result = partial_result(SolveStatus.BACKTRACK_FAILURE)
        raise
    except EvaluationError as exc:
        exc.result = partial_result(SolveStatus.EVALUATION_ERROR)
        raise

    return SolveResult(status, x.copy(), rho * data.F, tuple(history), counts)
