"""Dense normal-equation assembly and SPD solves.

Problems here are desk scale (n up to a few hundred), so everything is a
dense array and factorizations go through LAPACK via scipy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefiniteError

__all__ = ["SpdSystem", "assemble_normal_matrix", "solve_spd", "RESIDUAL_RTOL"]

# Residual contract for solve_spd: ||H d - g|| <= RESIDUAL_RTOL * (1 + ||g||).
RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True)
class SpdSystem:
    """A symmetric positive definite system H d = g."""

    H: np.ndarray
    g: np.ndarray

    def residual(self, d: np.ndarray) -> float:
        return float(np.linalg.norm(self.H @ d - self.g))


def _scaled_gram(J: np.ndarray, rho: float) -> np.ndarray:
    # Mirror the lower triangle so the result is symmetric to the bit, not
    # merely up to rounding in the BLAS product.
    M = rho * (J.T @ J)
    L = np.tril(M)
    return L + np.tril(M, -1).T


def _add_ridge(M: np.ndarray, beta: float) -> np.ndarray:
    H = M.copy()
    H[np.diag_indices_from(H)] += beta
    return H


def assemble_normal_matrix(J: np.ndarray, rho: float, beta: float) -> np.ndarray:
    """Form rho * J^T J + beta * I, exactly symmetric by construction."""
    if rho < 0 or beta < 0:
        raise ValueError("rho and beta must be nonnegative")
    J = np.asarray(J, dtype=float)
    return _add_ridge(_scaled_gram(J, rho), beta)


def solve_spd(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve H d = g by Cholesky factorization.

    On factorization failure, retries once with diagonal jitter
    1e-12 * trace(H)/n, then raises NotPositiveDefiniteError. Up to two
    refinement sweeps are applied if the raw solution misses the residual
    contract, which happens only for badly conditioned systems; for those,
    the reachable residual bottoms out near eps * ||H|| * ||d|| regardless.
    """

    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        factor = None
    except scipy.linalg.LinAlgError:
        factor = None
    if factor is None:
        jitter = 1e-12 * float(np.trace(H)) / H.shape[0]
        try:
            factor = scipy.linalg.cho_factor(
                _add_ridge(H, jitter), lower=True, check_finite=False
            )
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise NotPositiveDefiniteError(
                f"matrix is not positive definite (jitter {jitter:.3e} did not help)"
            ) from exc
    d = scipy.linalg.cho_solve(factor, g, check_finite=False)
    bound = RESIDUAL_RTOL * (1.0 + float(np.linalg.norm(g)))
    for _ in range(2):
        r = H @ d - g
        if float(np.linalg.norm(r)) <= bound:
            break
        d = d - scipy.linalg.cho_solve(factor, r, check_finite=False)
    return d
