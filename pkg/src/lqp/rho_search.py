"""Geometric search over the penalty level.

When no single rho is known in advance, solve a sequence of penalty
problems with rho multiplied by tau each round, warm-starting every round
from the previous one, until the returned iterate is feasible to the target
tolerance. The multiplier bound theory gives a round count of roughly
1 + log_tau(||multiplier|| / (rho0 * target)), so a handful of rounds
suffices in practice.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, RhoSearchExhaustedError
from .model import NlpProblem
from .solver import SolveResult, SolverConfig, solve

__all__ = ["RhoSearchConfig", "RhoSearchOutcome", "solve_with_trial_rho"]


@dataclass(frozen=True)
class RhoSearchConfig:
    """Settings for the trial-rho loop.

    rho0 is the base level; round k runs the inner solver at tau^k * rho0
    (the increase comes before the first solve, so round 1 already uses
    tau * rho0). The inner config acts as a template; its rho and beta_init
    are overridden per round.
    """

    rho0: float = 1e3
    tau: float = 10.0
    eps_feas_target: float = 1e-5
    max_rounds: int = 12
    inner: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ConfigError(f"rho0 must be positive, got {self.rho0}")
        if not self.tau > 1:
            raise ConfigError(f"tau must exceed 1, got {self.tau}")
        if not self.eps_feas_target > 0:
            raise ConfigError("eps_feas_target must be positive")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be at least 1")


class RhoSearchOutcome(NamedTuple):
    result: SolveResult
    rounds: int
    rho_final: float


def solve_with_trial_rho(problem: NlpProblem, x0, config: RhoSearchConfig,
                         *, round_observer=None) -> RhoSearchOutcome:
    """Increase rho geometrically until the solve ends feasible.

    A round is infeasible when ||F(x_final)|| exceeds eps_feas_target. Each
    round warm-starts from the previous round's final iterate and final
    damping value. Raises RhoSearchExhaustedError (last result attached)
    when max_rounds rounds all end infeasible.

    round_observer, when given, is called as observer(round_index, rho,
    result) after each inner solve; rounds count from 1.
    """
    x = np.array(x0, dtype=float)
    rho = config.rho0
    beta_start = config.inner.beta_init
    last: SolveResult | None = None
    for rounds in range(1, config.max_rounds + 1):
        rho = rho * config.tau
        inner = replace(config.inner, rho=rho,
                        beta_init=max(beta_start, config.inner.beta_min))
        last = solve(problem, x, inner)
        if round_observer is not None:
            round_observer(rounds, rho, last)
        x = last.x_final
        beta_start = last.history[-1].beta
        feas = last.history[-1].feas_norm
        if feas <= config.eps_feas_target:
            return RhoSearchOutcome(result=last, rounds=rounds, rho_final=rho)
    raise RhoSearchExhaustedError(
        f"still infeasible after {config.max_rounds} rounds "
        f"(last ||F|| = {last.history[-1].feas_norm:.3e} at rho = {rho:.3e})",
        result=last,
    )
