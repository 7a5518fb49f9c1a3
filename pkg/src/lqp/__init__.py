"""Penalty-based solver for smooth equality-constrained minimization.

The solver linearizes the constraints inside a quadratic penalty and takes
regularized Newton-type steps, adapting the regularization weight by
backtracking. Alongside it live a trial-and-error search over the penalty
level, reference baselines (gradient descent on the penalty, Gauss-Newton,
Levenberg-Marquardt), a small library of test problems, and a benchmark CLI
(``python -m lqp`` or the ``lqp`` script).
"""

from .errors import (
    BacktrackFailureError,
    ConfigError,
    DivergenceError,
    EvaluationError,
    FixedBetaDescentError,
    LqpError,
    MissingConstantsError,
    NotPositiveDefiniteError,
    RhoSearchExhaustedError,
    UnknownProblemError,
)
from .model import (
    DerivativeCheckReport,
    InequalityProblem,
    NlpProblem,
    ReferenceSolution,
    SmoothnessConstants,
    check_derivatives,
    transform_with_slacks,
)
from .penalty import PenaltyParams, StepOutcome, lqp_step, penalty_gradient, penalty_value
from .solver import (
    IterateRecord,
    KktResidual,
    SolveResult,
    SolveStatus,
    SolverConfig,
    estimate_gamma,
    kkt_residuals,
    solve,
)
from .baselines import (
    gauss_newton_step,
    levenberg_marquardt_step,
    penalty_gradient_descent,
    run_gauss_newton,
)
from .rho_search import RhoSearchConfig, RhoSearchOutcome, solve_with_trial_rho
from .library import DEFAULT_REGISTRY, ProblemRegistry, build, names
from .cli import RateDiagnostic, RunReport, batch, list_problems, run

__version__ = "0.1.0"

__all__ = [
    "BacktrackFailureError",
    "ConfigError",
    "DivergenceError",
    "EvaluationError",
    "FixedBetaDescentError",
    "LqpError",
    "MissingConstantsError",
    "NotPositiveDefiniteError",
    "RhoSearchExhaustedError",
    "UnknownProblemError",
    "DerivativeCheckReport",
    "InequalityProblem",
    "NlpProblem",
    "ReferenceSolution",
    "SmoothnessConstants",
    "check_derivatives",
    "transform_with_slacks",
    "PenaltyParams",
    "StepOutcome",
    "lqp_step",
    "penalty_gradient",
    "penalty_value",
    "IterateRecord",
    "KktResidual",
    "SolveResult",
    "SolveStatus",
    "SolverConfig",
    "estimate_gamma",
    "kkt_residuals",
    "solve",
    "gauss_newton_step",
    "levenberg_marquardt_step",
    "penalty_gradient_descent",
    "run_gauss_newton",
    "RhoSearchConfig",
    "RhoSearchOutcome",
    "solve_with_trial_rho",
    "DEFAULT_REGISTRY",
    "ProblemRegistry",
    "build",
    "names",
    "RateDiagnostic",
    "RunReport",
    "batch",
    "list_problems",
    "run",
    "__version__",
]
