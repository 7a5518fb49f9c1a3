"""Built-in benchmark problems.

Each entry is a builder returning a fully wired NlpProblem with a documented
starting point. Generated data is seeded, so repeated builds are
bit-identical. Analytic reference solutions are attached where one exists.
"""

from __future__ import annotations

import dataclasses
import inspect
import math

import numpy as np

from .errors import UnknownProblemError
from .model import (
    InequalityProblem,
    NlpProblem,
    ReferenceSolution,
    SmoothnessConstants,
    transform_with_slacks,
)

__all__ = ["ProblemRegistry", "DEFAULT_REGISTRY", "build", "names",
           "sphere_linear", "quad_affine", "dtoc_chain", "orthreg",
           "nls_null", "ineq_demo", "ineq_demo_raw"]


class ProblemRegistry:
    """Name-to-builder map with sized construction."""

    def __init__(self):
        self._builders = {}

    def register(self, name: str, builder):
        if name in self._builders:
            raise ValueError(f"problem {name!r} already registered")
        self._builders[name] = builder

    def names(self):
        return list(self._builders)

    def build(self, name: str, **params) -> NlpProblem:
        try:
            builder = self._builders[name]
        except KeyError:
            known = ", ".join(self._builders)
            raise UnknownProblemError(
                f"unknown problem {name!r}; known problems: {known}"
            ) from None
        accepted = inspect.signature(builder).parameters
        kept = {k: v for k, v in params.items() if v is not None and k in accepted}
        return builder(**kept)

    def rows(self):
        """(name, n, m, has_reference) for every entry at default size."""
        out = []
        for name, builder in self._builders.items():
            prob = builder()
            out.append((name, prob.n, prob.m, prob.reference_solution is not None))
        return out


def sphere_linear(size=None, seed=None) -> NlpProblem:
    """Minimize x1 + x2 on the circle ||x||^2 = 2.

    The minimizer is (-1, -1) with objective -2 and multiplier 1/2. The
    annotated smoothness constants are valid on the ball of radius 3, which
    contains every penalty sublevel set reachable from the documented start.
    """

    def eval_f(x):
        return float(x[0] + x[1])

    def eval_grad_f(x):
        return np.ones(2)

    def eval_F(x):
        return np.array([x @ x - 2.0])

    def eval_JF(x):
        return np.array([[2.0 * x[0], 2.0 * x[1]]])

    return NlpProblem(
        name="sphere-linear", n=2, m=1,
        eval_f=eval_f, eval_grad_f=eval_grad_f, eval_F=eval_F, eval_JF=eval_JF,
        x0=np.array([2.0, 0.0]),
        reference_solution=ReferenceSolution(
            x=np.array([-1.0, -1.0]), f=-2.0, multiplier=np.array([0.5])
        ),
        known_constants=SmoothnessConstants(
            grad_lipschitz=0.0, jac_lipschitz=2.0, jac_bound=6.0
        ),
    )


def quad_affine(size=None, seed=None, Q=None, p=None, A=None, b=None) -> NlpProblem:
    """Convex quadratic objective with affine equality constraints.

    min (1/2) x^T Q x - p^T x  s.t.  A x = b. The reference primal/dual pair
    comes from the dense KKT system [[Q, A^T], [A, 0]]. Explicit matrices can
    be passed to override the seeded instance.
    """
    explicit = [v is not None for v in (Q, p, A, b)]
    if any(explicit) and not all(explicit):
        raise ValueError("pass all of Q, p, A, b or none of them")
    if Q is None:
        n = int(size) if size is not None else 6
        m = max(1, n // 3)
        rng = np.random.default_rng(20230817 if seed is None else seed)
        M = rng.standard_normal((n, n)) / math.sqrt(n)
        Q = M.T @ M + 0.5 * np.eye(n)
        p = rng.standard_normal(n)
        A = rng.standard_normal((m, n)) / math.sqrt(n)
        b = 0.3 * rng.standard_normal(m)
    else:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        n, m = Q.shape[0], A.shape[0]

    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = Q
    kkt[:n, n:] = A.T
    kkt[n:, :n] = A
    sol = np.linalg.solve(kkt, np.concatenate([p, b]))
    x_star, lam_star = sol[:n], sol[n:]
    f_star = 0.5 * float(x_star @ Q @ x_star) - float(p @ x_star)

    def eval_f(x):
        return 0.5 * float(x @ (Q @ x)) - float(p @ x)

    def eval_grad_f(x):
        return Q @ x - p

    def eval_F(x):
        return A @ x - b

    def eval_JF(x):
        return A.copy()

    x0 = A.T @ np.linalg.solve(A @ A.T, b)
    return NlpProblem(
        name="quad-affine", n=n, m=m,
        eval_f=eval_f, eval_grad_f=eval_grad_f, eval_F=eval_F, eval_JF=eval_JF,
        x0=x0,
        reference_solution=ReferenceSolution(x=x_star, f=f_star, multiplier=lam_star),
        known_constants=SmoothnessConstants(
            grad_lipschitz=float(np.linalg.norm(Q, 2)),
            jac_lipschitz=0.0,
            jac_bound=float(np.linalg.norm(A, 2)),
        ),
    )


def dtoc_chain(size=None, seed=None) -> NlpProblem:
    """Discrete-time optimal control of a scalar bilinear chain.

    States u_0..u_N and controls v_0..v_{N-1}, dynamics
    u_{t+1} = u_t + h (v_t + u_t v_t) with h = 1/N. The objective tracks a
    reference level in the states, penalizes control effort, and pins the
    seed state u_0 softly at its initial value. The documented start (all
    states at the seed value, zero controls) satisfies the dynamics exactly.
    """
    N = int(size) if size is not None else 10
    if N < 1:
        raise ValueError("size must be at least 1")
    h = 1.0 / N
    u_init, u_ref = 0.5, 1.0
    w_seed, w_ctrl = 10.0, 0.1
    n, m = 2 * N + 1, N

    def split(x):
        return x[: N + 1], x[N + 1:]

    def eval_f(x):
        u, v = split(x)
        return float(0.5 * w_seed * (u[0] - u_init) ** 2
                     + 0.5 * np.sum((u[1:] - u_ref) ** 2)
                     + 0.5 * w_ctrl * np.sum(v ** 2))

    def eval_grad_f(x):
        u, v = split(x)
        g = np.empty_like(x)
        g[0] = w_seed * (u[0] - u_init)
        g[1: N + 1] = u[1:] - u_ref
        g[N + 1:] = w_ctrl * v
        return g

    def eval_F(x):
        u, v = split(x)
        return u[1:] - u[:-1] - h * (v + u[:-1] * v)

    def eval_JF(x):
        u, v = split(x)
        J = np.zeros((m, n))
        rows = np.arange(N)
        J[rows, rows] = -1.0 - h * v
        J[rows, rows + 1] = 1.0
        J[rows, N + 1 + rows] = -h * (1.0 + u[:-1])
        return J

    x0 = np.concatenate([np.full(N + 1, u_init), np.zeros(N)])
    return NlpProblem(
        name="dtoc-chain", n=n, m=m,
        eval_f=eval_f, eval_grad_f=eval_grad_f, eval_F=eval_F, eval_JF=eval_JF,
        x0=x0,
    )


def orthreg(size=None, seed=None) -> NlpProblem:
    """Orthogonal circle fit: project noisy points onto an unknown circle.

    Unknowns are the foot points w_i, the center c, and the radius r. The
    objective sums squared distances from the data to the foot points, the
    constraints keep each foot point on the circle. The documented start
    projects the data onto the centroid circle and is feasible to rounding.
    """
    N = int(size) if size is not None else 8
    if N < 3:
        raise ValueError("size must be at least 3")
    rng = np.random.default_rng(20230911 if seed is None else seed)
    c_true = np.array([0.3, -0.2])
    r_true = 1.5
    angles = rng.uniform(0.0, 2.0 * np.pi, N)
    z = c_true + r_true * np.column_stack([np.cos(angles), np.sin(angles)])
    z = z + 0.05 * rng.standard_normal((N, 2))
    n, m = 2 * N + 3, N

    def split(x):
        return x[: 2 * N].reshape(N, 2), x[2 * N: 2 * N + 2], x[2 * N + 2]

    def eval_f(x):
        w, _, _ = split(x)
        return float(np.sum((z - w) ** 2))

    def eval_grad_f(x):
        w, _, _ = split(x)
        g = np.zeros(n)
        g[: 2 * N] = (2.0 * (w - z)).ravel()
        return g

    def eval_F(x):
        w, c, r = split(x)
        d = w - c
        return np.sum(d * d, axis=1) - r * r

    def eval_JF(x):
        w, c, r = split(x)
        d = w - c
        J = np.zeros((m, n))
        for i in range(N):
            J[i, 2 * i: 2 * i + 2] = 2.0 * d[i]
        J[:, 2 * N: 2 * N + 2] = -2.0 * d
        J[:, 2 * N + 2] = -2.0 * r
        return J

    c0 = z.mean(axis=0)
    dist = np.linalg.norm(z - c0, axis=1)
    r0 = float(dist.mean())
    w0 = c0 + r0 * (z - c0) / dist[:, None]
    x0 = np.concatenate([w0.ravel(), c0, [r0]])
    return NlpProblem(
        name="orthreg", n=n, m=m,
        eval_f=eval_f, eval_grad_f=eval_grad_f, eval_F=eval_F, eval_JF=eval_JF,
        x0=x0,
    )


def nls_null(size=None, seed=None) -> NlpProblem:
    """Square nonlinear residual with a vanishing objective.

    F_i(x) = x_i - 0.5 sin(x_{i+1 mod N}) - c_i is a contraction, so the
    unique root is available to machine precision by fixed-point iteration
    and every feasible point is a KKT point with zero multiplier. Useful as
    a Gauss-Newton testbed. Constants are global: the Jacobian norm never
    exceeds 1.5 and its Lipschitz constant is 0.5.
    """
    N = int(size) if size is not None else 8
    if N < 1:
        raise ValueError("size must be at least 1")
    c = 0.3 * np.cos(0.7 * np.arange(1, N + 1))

    def eval_f(x):
        return 0.0

    def eval_grad_f(x):
        return np.zeros(N)

    def eval_F(x):
        return x - 0.5 * np.sin(np.roll(x, -1)) - c

    def eval_JF(x):
        J = np.eye(N)
        idx = np.arange(N)
        J[idx, (idx + 1) % N] += -0.5 * np.cos(np.roll(x, -1))
        return J

    x_star = np.zeros(N)
    for _ in range(200):
        x_star = 0.5 * np.sin(np.roll(x_star, -1)) + c

    return NlpProblem(
        name="nls-null", n=N, m=N,
        eval_f=eval_f, eval_grad_f=eval_grad_f, eval_F=eval_F, eval_JF=eval_JF,
        x0=np.zeros(N),
        reference_solution=ReferenceSolution(x=x_star, f=0.0, multiplier=np.zeros(N)),
        known_constants=SmoothnessConstants(
            grad_lipschitz=0.0, jac_lipschitz=0.5, jac_bound=1.5
        ),
    )


def ineq_demo_raw() -> InequalityProblem:
    """min y1 + y2 on the circle ||y||^2 = 2 with the half-plane y1 >= 0."""

    return InequalityProblem(
        name="ineq-demo", p=2, q=1, r=1,
        eval_g=lambda y: float(y[0] + y[1]),
        eval_grad_g=lambda y: np.ones(2),
        eval_G=lambda y: np.array([y @ y - 2.0]),
        eval_JG=lambda y: np.array([[2.0 * y[0], 2.0 * y[1]]]),
        eval_H=lambda y: np.array([-y[0]]),
        eval_JH=lambda y: np.array([[-1.0, 0.0]]),
    )


def ineq_demo(size=None, seed=None) -> NlpProblem:
    """Slack-transformed version of the half-plane circle problem.

    The constrained minimizer sits at y = (0, -sqrt(2)) where the inequality
    is active, so the slack is zero there. Variables are (y1, y2, s).
    """
    base = transform_with_slacks(ineq_demo_raw())
    root2 = math.sqrt(2.0)
    return dataclasses.replace(
        base,
        name="ineq-demo",
        x0=np.array([1.0, -1.0, 1.0]),
        reference_solution=ReferenceSolution(
            x=np.array([0.0, -root2, 0.0]),
            f=-root2,
            multiplier=np.array([root2 / 4.0, 1.0]),
        ),
    )


DEFAULT_REGISTRY = ProblemRegistry()
DEFAULT_REGISTRY.register("sphere-linear", sphere_linear)
DEFAULT_REGISTRY.register("quad-affine", quad_affine)
DEFAULT_REGISTRY.register("dtoc-chain", dtoc_chain)
DEFAULT_REGISTRY.register("orthreg", orthreg)
DEFAULT_REGISTRY.register("nls-null", nls_null)
DEFAULT_REGISTRY.register("ineq-demo", ineq_demo)


def build(name: str, **params) -> NlpProblem:
    """Construct a library problem by name from the default registry."""
    return DEFAULT_REGISTRY.build(name, **params)


def names():
    return DEFAULT_REGISTRY.names()
