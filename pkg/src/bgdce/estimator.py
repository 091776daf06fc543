"""Bandit cost estimator in spanner coordinates.

The learner needs only ``B^T c_hat``.  With ``M = E[v v^T] = B N B^T`` this
equals ``loss * N^{-1} alpha_p`` where ``alpha_p`` are the spanner
coordinates of the sampled strategy, so no m x m pseudo-inverse is formed
in the update.  :func:`full_space_estimate` builds ``c_hat`` itself and is
used only for cross-validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polytope import MixedSupport


class EstimatorError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SecondMoment:
    matrix: np.ndarray
    mu: float
    chol: np.ndarray

    def solve(self, v) -> np.ndarray:
        return np.linalg.solve(self.matrix, v)


def second_moment(support: MixedSupport) -> SecondMoment:
    """``N = (1 - mu) E_cara[alpha alpha^T] + (mu / s) I`` computed over the support."""
    if len(support) == 0:
        raise ValueError("empty support")
    C = support.coords
    N = (C.T * support.probs) @ C
    N = 0.5 * (N + N.T)
    try:
        L = np.linalg.cholesky(N)
    except np.linalg.LinAlgError:
        raise EstimatorError("second-moment matrix is not positive definite") from None
    return SecondMoment(N, support.mu, L)


def estimate_cost(loss: float, coords, moment: SecondMoment) -> np.ndarray:
    """``B^T c_hat = loss * N^{-1} alpha_p``."""
    if loss == 0.0:
        return np.zeros(moment.matrix.shape[0])
    return loss * moment.solve(np.asarray(coords, dtype=float))


def full_space_estimate(loss: float, vector, support: MixedSupport, rcond: float = 1e-10) -> np.ndarray:
    """``c_hat = loss * M^+ p`` with ``M`` the literal second moment over the support."""
    V = support.vectors
    M = (V.T * support.probs) @ V
    return loss * (np.linalg.pinv(M, rcond=rcond, hermitian=True) @ np.asarray(vector, dtype=float))


def estimate_bound(theta: float, m: int, c_max: float, mu: float) -> float:
    return theta * m ** 2.5 * c_max / mu


def second_moment_bound(m: int, c_max: float, mu: float) -> float:
    return m ** 4 * c_max ** 2 / mu
