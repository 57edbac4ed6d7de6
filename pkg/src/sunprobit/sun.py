"""The unified skew-normal (SUN) family.

A ``SUN_{p,n}(xi, Omega, Delta, gamma, Gamma)`` variable has density

    phi_p(z - xi; Omega)
      * Phi_n(gamma + Delta' Omega_bar^{-1} omega^{-1} (z - xi); Gamma - Delta' Omega_bar^{-1} Delta)
      / Phi_n(gamma; Gamma)

and the additive representation ``xi + omega (V0 + Delta Gamma^{-1} V1)``
with ``V0`` Gaussian and ``V1`` a truncated Gaussian. ``n = 0`` is the
Gaussian special case.
"""

import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, IndexOutOfRange, NotPositiveDefinite, RankDeficient
from .linalg import as_symmetric, cholesky, correlation_decompose, solve_spd
from .orthant import PRODUCT_RULE_MAX_DIM, OrthantProblem, log_cdf_shared, phi_n
from .seeding import seed_sequence
from .tmvn import TruncNormSpec, sample_mvn, sample_tmvn
from .univariate import LOG_2PI

DENSITY_ACCURACY = 1e-5
DEGENERATE_VAR = 1e-12
UNIT_DIAG_TOL = 1e-8


@dataclass(frozen=True)
class SunParams:
    """Parameters ``(xi, Omega, Delta, gamma, Gamma)`` of a SUN_{p,n}.

    Construction checks that ``Omega`` is positive definite and that the
    block matrix ``[[Gamma, Delta'], [Delta, Omega_bar]]`` is a full-rank
    correlation matrix.
    """

    xi: np.ndarray
    omega_mat: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    gamma_mat: np.ndarray

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        p = xi.size
        omega_mat = as_symmetric(np.reshape(self.omega_mat, (p, p)))
        gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        n = gamma.size
        delta = np.asarray(self.delta, dtype=float).reshape(p, n)
        gamma_mat = (
            as_symmetric(np.reshape(self.gamma_mat, (n, n))) if n else np.zeros((0, 0))
        )
        for name, val in [("xi", xi), ("Omega", omega_mat), ("Delta", delta), ("gamma", gamma)]:
            if not np.all(np.isfinite(val)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "omega_mat", omega_mat)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "gamma_mat", gamma_mat)
        self._validate()

    def _validate(self):
        cholesky(self.omega_mat, max_attempts=0)
        if self.n == 0:
            return
        if np.max(np.abs(np.diag(self.gamma_mat) - 1.0)) > UNIT_DIAG_TOL:
            raise ValueError("Gamma must have unit diagonal")
        try:
            cholesky(self.omega_star)
        except NotPositiveDefinite:
            raise NotPositiveDefinite(
                "[[Gamma, Delta'], [Delta, Omega_bar]] is not a full-rank correlation matrix"
            ) from None

    @classmethod
    def gaussian(cls, xi, omega_mat):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return cls(xi, omega_mat, np.zeros((xi.size, 0)), np.zeros(0), np.zeros((0, 0)))

    @property
    def p(self):
        return self.xi.size

    @property
    def n(self):
        return self.gamma.size

    @cached_property
    def _scales(self):
        return correlation_decompose(self.omega_mat)

    @property
    def omega(self):
        """Square roots of the diagonal of ``Omega`` (a vector)."""
        return self._scales[0]

    @property
    def omega_bar(self):
        return self._scales[1]

    @property
    def omega_star(self):
        return np.block([[self.gamma_mat, self.delta.T], [self.delta, self.omega_bar]])

    @cached_property
    def _obar_inv_delta(self):
        return solve_spd(self.omega_bar, self.delta)

    @cached_property
    def cond_cov(self):
        """``Gamma - Delta' Omega_bar^{-1} Delta``."""
        c = self.gamma_mat - self.delta.T @ self._obar_inv_delta
        return 0.5 * (c + c.T)


@dataclass(frozen=True)
class SunSampleBatch:
    draws: np.ndarray
    seed: object
    timing: float
    acceptance_rate: float = 1.0


def _gaussian_logpdf(s, z):
    L = cholesky(s.omega_mat).lower
    r = solve_triangular(L, (z - s.xi).T, lower=True)
    return -0.5 * np.sum(r * r, axis=0) - np.sum(np.log(np.diag(L))) - 0.5 * s.p * LOG_2PI


def sun_log_density(s, z, accuracy=DENSITY_ACCURACY, seed=0):
    """Log density at ``z`` (shape ``(p,)`` or ``(m, p)``).

    The numerator CDFs at all points share one covariance and are
    evaluated together by :func:`log_cdf_shared`; the normalizing CDF uses
    the same rule when ``n <= 4`` and :func:`phi_n` otherwise. Latent
    coordinates whose conditional variance falls below ``1e-12`` are
    treated as point masses at zero.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if z.shape[1] != s.p:
        raise DimensionMismatch(f"expected points of length {s.p}, got {z.shape[1]}")
    out = _gaussian_logpdf(s, z)
    if s.n:
        upper = s.gamma + ((z - s.xi) / s.omega) @ s._obar_inv_delta
        out = out + _log_cdf_degenerate(upper, s.cond_cov, accuracy, seed)
        out = out - _log_norm_const(s, accuracy, seed)
    return float(out[0]) if single else out


def _log_cdf_degenerate(upper, cov, accuracy, seed):
    var = np.diag(cov)
    point = var < DEGENERATE_VAR
    res = np.zeros(upper.shape[0])
    if point.any():
        res[np.any(upper[:, point] < 0, axis=1)] = -np.inf
    keep = np.flatnonzero(~point)
    if keep.size:
        lv, _ = log_cdf_shared(upper[:, keep], cov[np.ix_(keep, keep)], accuracy=accuracy, seed=seed)
        res = res + lv
    return res


def _log_norm_const(s, accuracy, seed):
    if s.n <= PRODUCT_RULE_MAX_DIM:
        # same deterministic rule as the numerator, so the ratio is consistent
        return float(log_cdf_shared(s.gamma[None, :], s.gamma_mat)[0][0])
    prob = OrthantProblem(s.gamma, s.gamma_mat, accuracy=accuracy, max_points=2**21, seed=seed)
    return phi_n(prob).log_value


def sun_log_mgf(s, t, accuracy=DENSITY_ACCURACY, seed=0):
    """Log moment generating function at ``t``.

    ``xi't + t' Omega t / 2 + log Phi_n(gamma + Delta' omega t; Gamma)
    - log Phi_n(gamma; Gamma)``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.size != s.p:
        raise DimensionMismatch(f"expected t of length {s.p}")
    val = float(s.xi @ t + 0.5 * t @ s.omega_mat @ t)
    if s.n == 0 or not np.any(t):
        return val
    shifted = s.gamma + s.delta.T @ (s.omega * t)
    if s.n <= PRODUCT_RULE_MAX_DIM:
        num = float(log_cdf_shared(shifted[None, :], s.gamma_mat)[0][0])
    else:
        num = phi_n(OrthantProblem(shifted, s.gamma_mat, accuracy=accuracy, seed=seed)).log_value
    return val + num - _log_norm_const(s, accuracy, seed)


def sun_sample(s, count, seed=None):
    """Independent draws via the additive representation.

    ``xi + omega (V0 + Delta Gamma^{-1} V1)`` with
    ``V0 ~ N_p(0, Omega_bar - Delta Gamma^{-1} Delta')`` and ``V1`` from
    ``N_n(0, Gamma)`` truncated below ``-gamma``.
    """
    start = time.perf_counter()
    ss = seed_sequence(seed)
    ss0, ss1 = ss.spawn(2)
    rate = 1.0
    if s.n == 0:
        v = sample_mvn(s.omega_bar, count, np.random.default_rng(ss0))
    else:
        K = solve_spd(s.gamma_mat, s.delta.T).T
        v0 = sample_mvn(s.omega_bar - K @ s.delta.T, count, np.random.default_rng(ss0))
        batch = sample_tmvn(TruncNormSpec(s.gamma_mat, -s.gamma), count, ss1)
        v = v0 + batch.draws @ K.T
        rate = batch.acceptance_rate
    draws = s.xi + v * s.omega
    return SunSampleBatch(draws, seed, time.perf_counter() - start, rate)


def _check_indices(indices, p):
    idx = np.atleast_1d(np.asarray(indices, dtype=int)).reshape(-1)
    if np.any(idx < 0) or np.any(idx >= p):
        raise IndexOutOfRange(f"indices must lie in [0, {p})")
    if np.unique(idx).size != idx.size:
        raise ValueError("indices must be distinct")
    return idx


def sun_marginal(s, indices):
    """SUN of the sub-vector ``z[indices]`` (0-based)."""
    idx = _check_indices(indices, s.p)
    if idx.size == 0:
        raise ValueError("at least one index is required")
    return SunParams(s.xi[idx], s.omega_mat[np.ix_(idx, idx)], s.delta[idx], s.gamma, s.gamma_mat)


def sun_affine(s, a, A):
    """SUN of ``a + A' z`` for a ``(p, q)`` matrix ``A`` of full column rank.

    Location ``a + A' xi``, scale ``A' Omega A`` and skewness
    ``omega_A^{-1} A' omega Delta`` so the new block matrix stays a
    correlation matrix.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[0] != s.p:
        raise DimensionMismatch(f"A must have {s.p} rows")
    a = np.broadcast_to(np.asarray(a, dtype=float), (A.shape[1],))
    omega_a = A.T @ s.omega_mat @ A
    try:
        cholesky(omega_a, max_attempts=0)
    except NotPositiveDefinite:
        raise RankDeficient("A' Omega A is not positive definite") from None
    scale_a = np.sqrt(np.diag(omega_a))
    delta_a = (A.T @ (s.omega[:, None] * s.delta)) / scale_a[:, None]
    return SunParams(a + A.T @ s.xi, omega_a, delta_a, s.gamma, s.gamma_mat)


def sun_conditional(s, fixed, values):
    """SUN of the remaining coordinates given ``z[fixed] = values``."""
    fixed = _check_indices(fixed, s.p) if np.size(fixed) else np.zeros(0, dtype=int)
    values = np.atleast_1d(np.asarray(values, dtype=float)).reshape(-1)
    if values.size != fixed.size:
        raise DimensionMismatch("one value per fixed index is required")
    if not np.all(np.isfinite(values)):
        raise ValueError("conditioning values must be finite")
    if fixed.size == 0:
        return s
    free = np.setdiff1d(np.arange(s.p), fixed)
    if free.size == 0:
        raise ValueError("cannot condition on every coordinate")

    obar = s.omega_bar
    w1 = s.omega[fixed]
    o11 = obar[np.ix_(fixed, fixed)]
    o21 = obar[np.ix_(free, fixed)]
    d1 = s.delta[fixed]
    d2 = s.delta[free]
    v1 = (values - s.xi[fixed]) / w1

    gain = solve_spd(o11, np.column_stack([v1, d1]))
    o11_v1 = gain[:, 0]
    o11_d1 = gain[:, 1:]

    om = s.omega_mat
    xi_c = s.xi[free] + om[np.ix_(free, fixed)] @ solve_spd(om[np.ix_(fixed, fixed)], values - s.xi[fixed])
    om_c = om[np.ix_(free, free)] - om[np.ix_(free, fixed)] @ solve_spd(
        om[np.ix_(fixed, fixed)], om[np.ix_(fixed, free)]
    )
    om_c = 0.5 * (om_c + om_c.T)

    gamma_shift = s.gamma + d1.T @ o11_v1
    gmat = s.gamma_mat - d1.T @ o11_d1
    tau = np.sqrt(np.diag(gmat))
    cross = (d2 - o21 @ o11_d1) * s.omega[free][:, None]
    scale_c = np.sqrt(np.diag(om_c))
    delta_c = cross / scale_c[:, None] / tau[None, :]
    return SunParams(
        xi_c,
        om_c,
        delta_c,
        gamma_shift / tau,
        gmat / np.outer(tau, tau),
    )


def sun_mean_mc(s, count, seed=None):
    """Monte Carlo mean and per-coordinate standard errors.

    With a single draw the standard errors are undefined and returned as NaN.
    """
    draws = sun_sample(s, count, seed).draws
    mean = draws.mean(axis=0)
    if count < 2:
        return mean, np.full(s.p, np.nan)
    return mean, draws.std(axis=0, ddof=1) / np.sqrt(count)
