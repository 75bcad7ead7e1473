"""Exact zero-mean GP computations given precomputed covariance blocks.

Shapes: ``k_noisy`` is the n x n training covariance with noise on its
diagonal, ``k_cross`` is n x t between training and query points and
``k_test_diag`` holds the t prior variances of the queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NegativeVariance
from .linalg import CholFactor, cholesky, inverse, logdet, solve_chol, solve_lower

LOG_2PI = float(np.log(2.0 * np.pi))
VARIANCE_CLAMP = 1e-10


@dataclass(frozen=True)
class GpPosterior:
    chol: CholFactor
    alpha: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray


def neg_log_marginal_likelihood(k_noisy, y):
    """``-log N(y | 0, k_noisy)``; returns ``(value, chol, alpha)``."""
    y = np.asarray(y, dtype=np.float64).ravel()
    chol = cholesky(k_noisy)
    if chol.n != y.size:
        raise DimensionMismatch(f"covariance is {chol.n}x{chol.n} but y has {y.size} entries")
    alpha = solve_chol(chol, y)
    value = 0.5 * float(y @ alpha) + 0.5 * logdet(chol) + 0.5 * y.size * LOG_2PI
    return value, chol, alpha


def _check_query(chol, k_cross, k_test_diag):
    k_cross = np.asarray(k_cross, dtype=np.float64)
    k_test_diag = np.asarray(k_test_diag, dtype=np.float64).ravel()
    if k_cross.ndim != 2 or k_cross.shape[0] != chol.n:
        raise DimensionMismatch(f"k_cross has shape {k_cross.shape}, expected ({chol.n}, t)")
    if k_test_diag.size != k_cross.shape[1]:
        raise DimensionMismatch(f"{k_test_diag.size} prior variances for {k_cross.shape[1]} queries")
    return k_cross, k_test_diag


def _latent_var(chol, k_cross, k_test_diag):
    v = solve_lower(chol, k_cross)
    var = k_test_diag - (v * v).sum(0)
    if var.size and var.min() < -VARIANCE_CLAMP:
        raise NegativeVariance(f"predictive variance {var.min():.3g} below clamp slack")
    return np.maximum(var, 0.0)


def posterior_predict(chol: CholFactor, alpha, k_cross, k_test_diag):
    """Latent predictive mean and marginal variance at each query."""
    k_cross, k_test_diag = _check_query(chol, k_cross, k_test_diag)
    mean = k_cross.T @ np.asarray(alpha, dtype=np.float64)
    return mean, _latent_var(chol, k_cross, k_test_diag)


def posterior(k_noisy, y, k_cross, k_test_diag) -> GpPosterior:
    _, chol, alpha = neg_log_marginal_likelihood(k_noisy, y)
    mean, var = posterior_predict(chol, alpha, k_cross, k_test_diag)
    return GpPosterior(chol, alpha, mean, var)


def variance_loss(chol: CholFactor, k_cross, k_test_diag) -> float:
    """Sum of latent predictive variances over a batch of query points."""
    k_cross, k_test_diag = _check_query(chol, k_cross, k_test_diag)
    return float(_latent_var(chol, k_cross, k_test_diag).sum())


def mll_adjoint(chol: CholFactor, alpha) -> np.ndarray:
    """Gradient of the NLML w.r.t. the noisy covariance: ``(K^-1 - alpha alpha^T) / 2``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return 0.5 * (inverse(chol) - np.outer(alpha, alpha))


def variance_adjoint(chol: CholFactor, k_cross, k_test_diag):
    """Gradients of ``variance_loss`` w.r.t. its three covariance inputs.

    Returns ``(d_k_cross, d_k_test_diag, d_k_train)``.
    """
    k_cross, k_test_diag = _check_query(chol, k_cross, k_test_diag)
    solved = solve_chol(chol, k_cross)
    return -2.0 * solved, np.ones_like(k_test_diag), solved @ solved.T
