"""Exception types shared across the solver stack.

Errors raised partway through a solve carry the partial result on the
``result`` attribute so callers can inspect the history collected so far.
"""

from __future__ import annotations


class LqpError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LqpError, ValueError):
    """A configuration value violates its documented range or mode."""


class EvaluationError(LqpError):
    """An evaluator raised or returned a non-finite value.

    ``point`` holds the offending iterate when known.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point
        self.result = None


class NotPositiveDefiniteError(LqpError):
    """Cholesky factorization failed even after the jitter retry."""


class BacktrackFailureError(LqpError):
    """No step accepted within the backtrack budget."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class FixedBetaDescentError(LqpError):
    """Fixed-beta mode produced a step that violates the descent test."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DivergenceError(LqpError):
    """Gradient descent on the penalty increased for too many steps."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class RhoSearchExhaustedError(LqpError):
    """All trial penalty rounds finished without reaching the feasibility target."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class MissingConstantsError(LqpError):
    """The problem carries no smoothness constants but a bound needs them."""


class UnknownProblemError(LqpError, KeyError):
    """Requested problem name is not in the registry."""

    def __str__(self):
        # KeyError would repr the message, wrapping it in quotes.
        return Exception.__str__(self)
