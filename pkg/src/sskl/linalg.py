"""Dense SPD linear algebra: Cholesky with a jitter ladder, solves, log-determinant.

Matrices are plain 2-D ``float64`` numpy arrays. Factorization and triangular
solves delegate to LAPACK through numpy/scipy; this module owns the
validation and the conditioning policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NonFinite, NotPositiveDefinite, NotSquare, NotSymmetric

#: Relative jitter multipliers tried in order; each is scaled by the mean diagonal.
JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4, 1e-2)

SYMMETRY_RTOL = 1e-9


@dataclass(frozen=True)
class JitterPolicy:
    ladder: tuple = JITTER_LADDER

    def values(self, a: np.ndarray):
        tau = float(np.mean(np.diag(a))) if a.shape[0] else 0.0
        # a non-positive mean diagonal still gets absolute steps so the ladder is not all zeros
        scale = tau if tau > 0 else 1.0
        return [rel * scale for rel in self.ladder]


DEFAULT_POLICY = JitterPolicy()


@dataclass(frozen=True)
class CholFactor:
    lower: np.ndarray
    jitter_used: float = 0.0

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return a


def check_symmetric(a: np.ndarray, rtol: float = SYMMETRY_RTOL) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {a.shape}")
    scale = max(float(np.max(np.abs(a))), 1.0) if a.size else 1.0
    if a.size and float(np.max(np.abs(a - a.T))) > rtol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")


def cholesky(a, jitter_policy: JitterPolicy = DEFAULT_POLICY) -> CholFactor:
    """Lower Cholesky factor of ``a + jitter * I``, using the smallest working jitter.

    Raises NotPositiveDefinite when the largest ladder value still fails.
    """
    a = as_matrix(a)
    check_symmetric(a)
    n = a.shape[0]
    eye = np.eye(n)
    for jitter in jitter_policy.values(a):
        try:
            lower = np.linalg.cholesky(a + jitter * eye if jitter else a)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.diag(lower) > 0):
            return CholFactor(lower=lower, jitter_used=jitter)
    raise NotPositiveDefinite(
        f"Cholesky failed for {n}x{n} matrix at max jitter {jitter_policy.values(a)[-1]:.3g}"
    )


def solve_lower(factor: CholFactor, b: np.ndarray) -> np.ndarray:
    """Forward substitution ``L^{-1} b``."""
    return solve_triangular(factor.lower, b, lower=True, check_finite=False)


def solve_chol(factor: CholFactor, b) -> np.ndarray:
    """Solve ``(L L^T) x = b`` by forward then back substitution."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != factor.n:
        raise DimensionMismatch(f"factor is {factor.n}x{factor.n} but b has {b.shape[0]} rows")
    z = solve_triangular(factor.lower, b, lower=True, check_finite=False)
    return solve_triangular(factor.lower.T, z, lower=False, check_finite=False)


def inverse(factor: CholFactor) -> np.ndarray:
    return solve_chol(factor, np.eye(factor.n))


def logdet(factor: CholFactor) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(factor.lower))))
