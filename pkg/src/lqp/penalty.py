"""Quadratic penalty function and the linearized proximal step.

The penalty associated with (f, F) at level rho is

    P(x) = f(x) + (rho/2) * ||F(x)||^2,

with gradient grad f(x) + J_F(x)^T (rho * F(x)). One step linearizes f and F
at the current point, adds a proximal term (beta/2) * ||x - x_k||^2, and
minimizes the resulting strongly convex quadratic in closed form:

    x_next = x - (rho * J^T J + beta * I)^{-1} (grad f + rho * J^T F).

beta = 0 turns the step into plain Gauss-Newton and is allowed only when
J^T J is invertible; the adaptive solver keeps beta at or above its floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError
from .linalg import RESIDUAL_RTOL, SpdSystem, _add_ridge, _scaled_gram, solve_spd

__all__ = [
    "PenaltyParams",
    "StepOutcome",
    "penalty_value",
    "penalty_gradient",
    "lqp_step",
    "descent_check",
    "DESCENT_SLACK",
]

# Additive slack in the descent test, scaled by 1 + |P_prev|. Covers rounding
# in penalty values without masking a genuine ascent step.
DESCENT_SLACK = 1e-12


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty level. Must be positive; the solver never mutates it."""

    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")


@dataclass(frozen=True)
class StepOutcome:
    """One linearized step.

    x_next is exactly x + delta_x. subproblem_residual is the norm of
    H @ delta_x + g for the assembled system, model_value the linearized
    penalty at x_next (no proximal term).
    """

    x_next: np.ndarray
    delta_x: np.ndarray
    subproblem_residual: float
    model_value: float


def _as_finite(value, x, what):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"{what} returned a non-finite value", point=x)
    return arr


@dataclass
class _PointData:
    """Cached evaluator output at one iterate."""

    f: float
    grad: np.ndarray
    F: np.ndarray
    J: np.ndarray
    feas: float
    penalty: float


def _objective_and_residual(problem, x, rho):
    f = float(_as_finite(problem.eval_f(x), x, "eval_f"))
    F = _as_finite(problem.eval_F(x), x, "eval_F")
    feas = float(np.linalg.norm(F))
    # Penalty from the stored feasibility norm, so records and descent tests
    # agree to the bit.
    penalty = f + 0.5 * rho * feas * feas
    return f, F, feas, penalty


def _eval_point(problem, x, rho) -> _PointData:
    f, F, feas, penalty = _objective_and_residual(problem, x, rho)
    grad = _as_finite(problem.eval_grad_f(x), x, "eval_grad_f")
    J = _as_finite(problem.eval_JF(x), x, "eval_JF")
    return _PointData(f=f, grad=grad, F=F, J=J, feas=feas, penalty=penalty)


def _step_kernel(data: _PointData, x, rho, beta, g, gram) -> StepOutcome:
    # gram is rho * J^T J pre-assembled; only the ridge changes across
    # backtrack trials, so callers pay for the Gram product once.
    system = SpdSystem(_add_ridge(gram, beta), g)
    delta = -solve_spd(system.H, system.g)
    residual = float(np.linalg.norm(system.H @ delta + g))
    # Residual sanity check. The nominal contract is RESIDUAL_RTOL relative
    # to 1 + ||g||, but when the solution spans many orders of magnitude
    # (tiny beta against a huge gram ridge-less block) the residual cannot
    # measure below eps * ||H|| * ||delta|| in doubles, so the floor term
    # keeps the assert honest instead of tripping on representability.
    _eps = np.finfo(float).eps
    _floor = 64.0 * _eps * (
        float(np.linalg.norm(system.H, "fro")) * float(np.linalg.norm(delta))
        + float(np.linalg.norm(g))
    )
    assert residual <= max(RESIDUAL_RTOL * (1.0 + float(np.linalg.norm(g))), _floor)
    # Linearized penalty at the candidate: f + grad.delta + rho/2 ||F + J delta||^2.
    lin_F = data.F + data.J @ delta
    model = data.f + float(data.grad @ delta) + 0.5 * rho * float(lin_F @ lin_F)
    return StepOutcome(
        x_next=x + delta,
        delta_x=delta,
        subproblem_residual=residual,
        model_value=model,
    )


def _trial_step(data: _PointData, x, rho, beta) -> StepOutcome:
    g = data.grad + rho * (data.J.T @ data.F)
    return _step_kernel(data, x, rho, beta, g, _scaled_gram(data.J, rho))


def penalty_value(problem, x, params: PenaltyParams) -> float:
    """P(x) = f(x) + (rho/2) ||F(x)||^2."""
    x = np.asarray(x, dtype=float)
    return _objective_and_residual(problem, x, params.rho)[3]


def penalty_gradient(problem, x, params: PenaltyParams) -> np.ndarray:
    """grad f(x) + J_F(x)^T (rho F(x)), finite by construction or it raises."""
    x = np.asarray(x, dtype=float)
    grad = _as_finite(problem.eval_grad_f(x), x, "eval_grad_f")
    F = _as_finite(problem.eval_F(x), x, "eval_F")
    J = _as_finite(problem.eval_JF(x), x, "eval_JF")
    return grad + J.T @ (params.rho * F)


def lqp_step(problem, x, params: PenaltyParams, beta: float) -> StepOutcome:
    """Single linearized proximal step at x.

    beta must be nonnegative. beta = 0 requires J^T J positive definite and
    is reserved for the Gauss-Newton baseline; the adaptive loop never
    passes it.
    """
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    x = np.asarray(x, dtype=float)
    data = _eval_point(problem, x, params.rho)
    return _trial_step(data, x, params.rho, beta)


def descent_check(p_prev: float, p_next: float, beta: float, delta_sq: float) -> bool:
    """Sufficient-decrease test for one accepted step.

    True iff p_next <= p_prev - (beta/2) * delta_sq, with additive slack
    DESCENT_SLACK * (1 + |p_prev|) for floating-point noise.
    """
    return p_next <= p_prev - 0.5 * beta * delta_sq + DESCENT_SLACK * (1.0 + abs(p_prev))
