import numpy as np
import pytest

from lqp import PenaltyParams, build, lqp_step, names
from lqp import penalty_gradient, penalty_value
from lqp.baselines import gauss_newton_step
from lqp.model import NlpProblem
from lqp.penalty import DESCENT_SLACK, descent_check


def _sphere():
    return build("sphere-linear")


def _null_objective(name, eval_F, eval_JF, n, m, x0=None):
    return NlpProblem(
        name=name, n=n, m=m,
        eval_f=lambda x: 0.0,
        eval_grad_f=lambda x: np.zeros(n),
        eval_F=eval_F,
        eval_JF=eval_JF,
        x0=x0,
    )


def test_penalty_value_feasible_point():
    assert penalty_value(_sphere(), np.array([1.0, 1.0]), PenaltyParams(7.0)) == 2.0


def test_penalty_value_hand_arithmetic():
    assert penalty_value(_sphere(), np.array([2.0, 0.0]), PenaltyParams(4.0)) == 10.0


def test_penalty_value_pure_residual():
    prob = _null_objective("line", lambda x: x, lambda x: np.eye(1), 1, 1)
    assert penalty_value(prob, np.array([3.0]), PenaltyParams(2.0)) == 9.0


def test_params_reject_nonpositive_rho():
    with pytest.raises(ValueError):
        PenaltyParams(0.0)
    with pytest.raises(ValueError):
        PenaltyParams(-1.0)


def test_penalty_gradient_hand_arithmetic():
    g = penalty_gradient(_sphere(), np.array([2.0, 0.0]), PenaltyParams(4.0))
    np.testing.assert_array_equal(g, [33.0, 1.0])


def test_penalty_gradient_zero_at_flat_feasible_point():
    prob = _null_objective("line", lambda x: x, lambda x: np.eye(1), 1, 1)
    g = penalty_gradient(prob, np.zeros(1), PenaltyParams(5.0))
    np.testing.assert_array_equal(g, [0.0])


def test_penalty_gradient_matches_fd_on_library():
    rng = np.random.default_rng(101)
    params = PenaltyParams(3.0)
    h = float(np.finfo(float).eps) ** (1.0 / 3.0)
    for name in names():
        problem = build(name)
        for _ in range(10):
            x = problem.x0 + 0.2 * rng.standard_normal(problem.n)
            g = penalty_gradient(problem, x, params)
            for i in range(problem.n):
                e = np.zeros(problem.n)
                e[i] = h * (1.0 + abs(x[i]))
                fd = (penalty_value(problem, x + e, params)
                      - penalty_value(problem, x - e, params)) / (2.0 * e[i])
                assert abs(fd - g[i]) / (1.0 + abs(g[i])) < 1e-5


def test_lqp_step_scalar_identity_residual():
    prob = _null_objective("line", lambda x: x, lambda x: np.eye(1), 1, 1)
    out = lqp_step(prob, np.array([1.0]), PenaltyParams(1.0), beta=1.0)
    assert out.x_next[0] == pytest.approx(0.5, rel=1e-15)


def test_lqp_step_quadratic_objective():
    prob = NlpProblem(
        name="quad", n=1, m=1,
        eval_f=lambda x: 0.5 * float(x[0] ** 2),
        eval_grad_f=lambda x: x.copy(),
        eval_F=lambda x: x - 1.0,
        eval_JF=lambda x: np.eye(1),
    )
    out = lqp_step(prob, np.zeros(1), PenaltyParams(1.0), beta=1.0)
    assert out.x_next[0] == pytest.approx(0.5, rel=1e-15)


def test_lqp_step_beta_zero_is_newton_on_residual():
    prob = _null_objective(
        "sq", lambda x: x * x - 4.0, lambda x: (2.0 * x).reshape(1, 1), 1, 1
    )
    out = lqp_step(prob, np.array([3.0]), PenaltyParams(1.0), beta=0.0)
    assert out.x_next[0] == pytest.approx(13.0 / 6.0, rel=1e-14)
    gn = gauss_newton_step(prob, np.array([3.0]))
    np.testing.assert_array_equal(out.x_next, gn)


def test_step_outcome_invariants():
    problem = _sphere()
    x = np.array([2.0, 0.0])
    out = lqp_step(problem, x, PenaltyParams(10.0), beta=0.5)
    np.testing.assert_array_equal(out.x_next, x + out.delta_x)
    g = penalty_gradient(problem, x, PenaltyParams(10.0))
    assert out.subproblem_residual <= 1e-10 * (1.0 + np.linalg.norm(g))


def test_step_model_value_is_linearized_penalty():
    # For affine F and linear f the model equals the true penalty at x_next.
    prob = NlpProblem(
        name="affine", n=2, m=1,
        eval_f=lambda x: float(x[0] + x[1]),
        eval_grad_f=lambda x: np.ones(2),
        eval_F=lambda x: np.array([x[0] - x[1] - 1.0]),
        eval_JF=lambda x: np.array([[1.0, -1.0]]),
    )
    params = PenaltyParams(2.0)
    out = lqp_step(prob, np.array([0.5, 0.25]), params, beta=0.3)
    assert out.model_value == pytest.approx(
        penalty_value(prob, out.x_next, params), rel=1e-12
    )


def test_descent_check_accepts_sufficient_drop():
    assert descent_check(10.0, 9.0, 1.0, 1.0)


def test_descent_check_rejects_insufficient_drop():
    assert not descent_check(10.0, 9.9, 1.0, 1.0)


def test_descent_check_zero_step_fixed_point():
    assert descent_check(10.0, 10.0, 1.0, 0.0)


def test_descent_check_slack_scales_with_value():
    p = 1e6
    assert descent_check(p, p + 0.5 * DESCENT_SLACK * (1.0 + p), 1.0, 0.0)
    assert not descent_check(p, p + 2.0 * DESCENT_SLACK * (1.0 + p), 1.0, 0.0)
