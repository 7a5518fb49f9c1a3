"""Problem containers and derivative checking.

A problem is a set of dense evaluators for

    min f(x)  subject to  F(x) = 0,   f: R^n -> R,  F: R^n -> R^m,  m <= n.

Evaluators are expected to be pure: no internal state, bit-identical output
for identical input. Everything downstream (step acceptance, warm starts,
reproducible benchmark runs) leans on that convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError

__all__ = [
    "SmoothnessConstants",
    "ReferenceSolution",
    "NlpProblem",
    "InequalityProblem",
    "DerivativeCheckReport",
    "transform_with_slacks",
    "check_derivatives",
]

# Step size exponent for central differences: error is O(h^2) with h ~ eps^(1/3).
_FD_STEP = float(np.finfo(float).eps) ** (1.0 / 3.0)


@dataclass(frozen=True)
class SmoothnessConstants:
    """Lipschitz/bound data valid on the region a run visits.

    grad_lipschitz   Lipschitz constant of the objective gradient.
    jac_lipschitz    Lipschitz constant of the constraint Jacobian.
    jac_bound        Upper bound on the Jacobian operator norm.
    """

    grad_lipschitz: float
    jac_lipschitz: float
    jac_bound: float


@dataclass(frozen=True)
class ReferenceSolution:
    """Known primal/dual solution used for reporting and rate fits."""

    x: np.ndarray
    f: float
    multiplier: np.ndarray


@dataclass(frozen=True)
class NlpProblem:
    """Equality-constrained problem in evaluator form.

    eval_f, eval_grad_f, eval_F, eval_JF are dense callables on R^n. The
    domain is all of R^n; evaluators must not assume feasibility. x0 is the
    documented starting point for benchmark runs, reference_solution and
    known_constants are optional metadata.
    """

    name: str
    n: int
    m: int
    eval_f: Callable[[np.ndarray], float]
    eval_grad_f: Callable[[np.ndarray], np.ndarray]
    eval_F: Callable[[np.ndarray], np.ndarray]
    eval_JF: Callable[[np.ndarray], np.ndarray]
    x0: Optional[np.ndarray] = None
    reference_solution: Optional[ReferenceSolution] = None
    known_constants: Optional[SmoothnessConstants] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 0 < self.m <= self.n:
            raise ValueError(f"need 0 < m <= n, got m={self.m}, n={self.n}")


@dataclass(frozen=True)
class InequalityProblem:
    """Problem with q equalities G(y) = 0 and r inequalities H(y) <= 0.

    Solved by rewriting each inequality as H_i(y) + s_i^2 = 0 with a slack
    variable; see transform_with_slacks.
    """

    name: str
    p: int
    q: int
    r: int
    eval_g: Callable[[np.ndarray], float]
    eval_grad_g: Callable[[np.ndarray], np.ndarray]
    eval_G: Callable[[np.ndarray], np.ndarray]
    eval_JG: Callable[[np.ndarray], np.ndarray]
    eval_H: Callable[[np.ndarray], np.ndarray]
    eval_JH: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.p < 1 or self.q < 0 or self.r < 1:
            raise ValueError("need p >= 1, q >= 0, r >= 1")


@dataclass
class DerivativeCheckReport:
    """Result of comparing analytic derivatives against central differences."""

    max_grad_error: float
    max_jac_error: float
    sample_points: int
    passed: bool
    tolerance: float = 1e-5


def transform_with_slacks(problem: InequalityProblem) -> NlpProblem:
    """Rewrite inequalities as equalities with squared slacks.

    The combined variable is x = (y, s) with s in R^r, and the equality map is

        F(x) = ( G(y), H(y) + s*s )   (elementwise square on s),

    so n = p + r and m = q + r. The objective ignores the slack block. The
    Jacobian gains a diagonal block: row q+i has entry 2*s_i in the column of
    its own slack and zeros in the others.
    """

    p, q, r = problem.p, problem.q, problem.r
    n = p + r
    m = q + r

    def eval_f(x):
        return problem.eval_g(x[:p])

    def eval_grad_f(x):
        out = np.zeros(n)
        out[:p] = problem.eval_grad_g(x[:p])
        return out

    def eval_F(x):
        y, s = x[:p], x[p:]
        out = np.empty(m)
        if q:
            out[:q] = problem.eval_G(y)
        out[q:] = problem.eval_H(y) + s * s
        return out

    def eval_JF(x):
        y, s = x[:p], x[p:]
        out = np.zeros((m, n))
        if q:
            out[:q, :p] = problem.eval_JG(y)
        out[q:, :p] = problem.eval_JH(y)
        out[q:, p:] = np.diag(2.0 * s)
        return out

    return NlpProblem(
        name=problem.name + "-slack",
        n=n,
        m=m,
        eval_f=eval_f,
        eval_grad_f=eval_grad_f,
        eval_F=eval_F,
        eval_JF=eval_JF,
    )


def _central_grad(fun, x, h):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h[i])
    return g


def check_derivatives(problem: NlpProblem, points, tol: float = 1e-5) -> DerivativeCheckReport:
    """Compare eval_grad_f and eval_JF against central differences.

    Per-coordinate step h_i = eps^(1/3) * (1 + |x_i|). Errors are measured
    componentwise as |fd - analytic| / (1 + |analytic|), which behaves like a
    relative error away from zero and an absolute one near it. An evaluator
    that raises or returns a non-finite value at a probe point aborts the
    check with EvaluationError naming that point.
    """

    max_grad = 0.0
    max_jac = 0.0
    count = 0
    for x in points:
        x = np.asarray(x, dtype=float)
        h = _FD_STEP * (1.0 + np.abs(x))
        try:
            grad = np.asarray(problem.eval_grad_f(x), dtype=float)
            jac = np.asarray(problem.eval_JF(x), dtype=float)
            fd_grad = _central_grad(lambda z: float(problem.eval_f(z)), x, h)
            fd_jac = np.column_stack(
                [
                    (np.asarray(problem.eval_F(x + _basis(x, i, h[i])), dtype=float)
                     - np.asarray(problem.eval_F(x - _basis(x, i, h[i])), dtype=float))
                    / (2.0 * h[i])
                    for i in range(problem.n)
                ]
            )
        except EvaluationError:
            raise
        except Exception as exc:
            raise EvaluationError(f"evaluator failed at probe point {x!r}", point=x) from exc
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(jac))
                and np.all(np.isfinite(fd_grad)) and np.all(np.isfinite(fd_jac))):
            raise EvaluationError(f"non-finite derivative data at probe point {x!r}", point=x)
        max_grad = max(max_grad, float(np.max(np.abs(fd_grad - grad) / (1.0 + np.abs(grad)))))
        max_jac = max(max_jac, float(np.max(np.abs(fd_jac - jac) / (1.0 + np.abs(jac)))))
        count += 1
    return DerivativeCheckReport(
        max_grad_error=max_grad,
        max_jac_error=max_jac,
        sample_points=count,
        passed=(max_grad <= tol and max_jac <= tol),
        tolerance=tol,
    )


def _basis(x, i, step):
    e = np.zeros_like(x)
    e[i] = step
    return e
