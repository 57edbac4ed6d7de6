"""Dense symmetric linear algebra used by every numerical module."""

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import NotPositiveDefinite

MAX_ATTEMPTS = 4
BASE_JITTER = 1e-10


@dataclass(frozen=True)
class CholFactor:
    lower: np.ndarray
    jitter_applied: float = 0.0

    def reconstruct(self):
        return self.lower @ self.lower.T


def as_symmetric(m, rtol=1e-8):
    """Return ``(m + m.T) / 2`` as a float array, rejecting grossly asymmetric input."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        return m.copy()
    scale = max(np.max(np.abs(m)), 1e-300)
    if np.max(np.abs(m - m.T)) > rtol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (m + m.T)


def cholesky(m, max_attempts=MAX_ATTEMPTS, base_jitter=BASE_JITTER):
    """Lower Cholesky factor with escalating diagonal jitter.

    The first attempt is made without jitter. On failure the diagonal is
    inflated by ``base_jitter * mean(diag(m))``, growing tenfold on each of
    up to ``max_attempts`` further tries.

    Raises
    ------
    NotPositiveDefinite
        If every attempt fails.
    """
    m = as_symmetric(m)
    n = m.shape[0]
    if n == 0:
        return CholFactor(np.zeros((0, 0)), 0.0)
    try:
        return CholFactor(np.linalg.cholesky(m), 0.0)
    except np.linalg.LinAlgError:
        pass
    base = base_jitter * float(np.mean(np.diag(m)))
    if base > 0:
        eye = np.eye(n)
        for k in range(max_attempts):
            jitter = base * 10.0**k
            try:
                return CholFactor(np.linalg.cholesky(m + jitter * eye), jitter)
            except np.linalg.LinAlgError:
                continue
    raise NotPositiveDefinite(
        f"matrix of dimension {n} is not positive definite "
        f"(after {max_attempts} jitter attempts)"
    )


def correlation_decompose(m):
    """Split a covariance into scales and a correlation matrix.

    Returns ``(omega, corr)`` with ``omega`` the vector of square-root
    diagonal entries, so that ``diag(omega) @ corr @ diag(omega) == m``.
    """
    m = as_symmetric(m)
    d = np.diag(m)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NotPositiveDefinite("covariance has a non-positive diagonal entry")
    omega = np.sqrt(d)
    corr = m / np.outer(omega, omega)
    np.fill_diagonal(corr, 1.0)
    return omega, corr


def solve_spd(m, rhs):
    """Solve ``m @ x = rhs`` for symmetric positive definite ``m``."""
    factor = cholesky(m)
    rhs = np.asarray(rhs, dtype=float)
    if factor.lower.shape[0] == 0:
        return rhs.copy()
    return sla.cho_solve((factor.lower, True), rhs)


def psd_sqrt(m, tol=1e-8):
    """A square-root factor ``F`` with ``F @ F.T == m`` for PSD ``m``.

    Tries the jittered Cholesky path first and falls back to a clipped
    eigendecomposition, which also covers exactly singular matrices.
    """
    m = as_symmetric(m)
    try:
        return cholesky(m).lower
    except NotPositiveDefinite:
        pass
    vals, vecs = np.linalg.eigh(m)
    scale = max(np.max(np.abs(vals)), 1.0) if vals.size else 1.0
    if vals.size and vals.min() < -tol * scale:
        raise NotPositiveDefinite("matrix has a negative eigenvalue")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))
