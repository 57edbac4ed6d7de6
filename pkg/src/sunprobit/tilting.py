"""Minimax exponential tilting for Gaussian probabilities over boxes.

Shared machinery for the orthant-probability estimator and the
truncated-normal sampler: a pivoted Cholesky factorization that orders
variables by smallest conditional probability, the saddle-point solve for
the tilting parameters, and the sequential tilted proposal that both
consumers draw from.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from .errors import NotPositiveDefinite
from .linalg import as_symmetric
from .univariate import log_interval_prob, trunc_norm_ppf

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_EPS = np.finfo(float).eps

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class TiltedProblem:
    """A box probability in standardized, reordered coordinates.

    ``strict`` is the strictly lower part of the Cholesky factor after
    each row is divided by its diagonal entry ``scale``; ``lower`` and
    ``upper`` are likewise scaled and permuted. ``x`` and ``mu`` are the
    saddle-point solution (both zero when tilting is disabled or failed).
    """

    chol: np.ndarray
    scale: np.ndarray
    strict: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    perm: np.ndarray
    x: np.ndarray
    mu: np.ndarray
    psi_star: float
    tilted: bool
    newton_iterations: int

    @property
    def dim(self):
        return self.lower.size


def cholperm(cov, lower, upper):
    """Cholesky factor with greedy variable reordering.

    At step ``j`` the remaining variable with the smallest conditional
    probability of falling in its interval is pivoted to position ``j``;
    conditioning uses the truncated means of the variables already placed.

    Returns ``(chol, lower, upper, perm)`` where ``chol @ chol.T`` equals
    ``cov[perm][:, perm]`` and the limits are permuted to match.
    """
    sig = as_symmetric(cov).copy()
    lo = np.array(lower, dtype=float)
    up = np.array(upper, dtype=float)
    d = lo.size
    perm = np.arange(d)
    chol = np.zeros((d, d))
    z = np.zeros(d)
    for j in range(d):
        rest = slice(j, d)
        cond_var = np.diag(sig)[rest] - np.sum(chol[rest, :j] ** 2, axis=1)
        cond_sd = np.sqrt(np.maximum(cond_var, _EPS))
        shift = chol[rest, :j] @ z[:j]
        pr = log_interval_prob((lo[rest] - shift) / cond_sd, (up[rest] - shift) / cond_sd)
        k = j + int(np.argmin(pr))
        if k != j:
            jk, kj = [j, k], [k, j]
            sig[jk, :] = sig[kj, :]
            sig[:, jk] = sig[:, kj]
            chol[jk, :] = chol[kj, :]
            lo[jk] = lo[kj]
            up[jk] = up[kj]
            perm[jk] = perm[kj]
        s = sig[j, j] - np.sum(chol[j, :j] ** 2)
        if s < -0.01 * max(sig[j, j], 1.0):
            raise NotPositiveDefinite("covariance is not positive semi-definite")
        chol[j, j] = np.sqrt(max(s, _EPS))
        chol[j + 1 :, j] = (sig[j + 1 :, j] - chol[j + 1 :, :j] @ chol[j, :j]) / chol[j, j]
        shift_j = chol[j, :j] @ z[:j]
        tl = (lo[j] - shift_j) / chol[j, j]
        tu = (up[j] - shift_j) / chol[j, j]
        w = log_interval_prob(tl, tu)
        z[j] = _pdf_ratio(tl, w) - _pdf_ratio(tu, w)
    return chol, lo, up, perm


def _pdf_ratio(t, logz):
    # phi(t) / exp(logz), zero at infinite t
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        r = np.exp(-0.5 * t * t - logz) * _INV_SQRT_2PI
    return np.where(np.isfinite(t), r, 0.0)


def grad_psi(y, strict, lower, upper):
    """Gradient and Jacobian of the tilting objective.

    ``y`` stacks the free coordinates ``x[:d-1]`` and ``mu[:d-1]``.
    """
    d = lower.size
    x = np.zeros(d)
    mu = np.zeros(d)
    x[: d - 1] = y[: d - 1]
    mu[: d - 1] = y[d - 1 :]
    c = strict @ x
    lt = lower - mu - c
    ut = upper - mu - c
    w = log_interval_prob(lt, ut)
    pl = _pdf_ratio(lt, w)
    pu = _pdf_ratio(ut, w)
    P = pl - pu
    dfdx = -mu[: d - 1] + P @ strict[:, : d - 1]
    dfdm = mu - x + P
    grad = np.concatenate([dfdx, dfdm[: d - 1]])

    lt = np.where(np.isfinite(lt), lt, 0.0)
    ut = np.where(np.isfinite(ut), ut, 0.0)
    dP = -P * P + lt * pl - ut * pu
    DL = dP[:, None] * strict
    mx = (DL - np.eye(d))[: d - 1, : d - 1]
    xx = (strict.T @ DL)[: d - 1, : d - 1]
    jac = np.block([[xx, mx.T], [mx, np.diag(1.0 + dP[: d - 1])]])
    return grad, jac


def psi(x, mu, strict, lower, upper):
    """Log of the tilted likelihood-ratio bound at ``(x, mu)``."""
    d = lower.size
    xf = np.zeros(d)
    mf = np.zeros(d)
    xf[: d - 1] = x[: d - 1]
    mf[: d - 1] = mu[: d - 1]
    c = strict @ xf
    lt = lower - mf - c
    ut = upper - mf - c
    return float(np.sum(log_interval_prob(lt, ut) + 0.5 * mf * mf - xf * mf))


def solve_saddle(strict, lower, upper, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """Damped Newton iterations on ``grad_psi = 0``.

    The step length is halved until the gradient norm decreases. Returns
    ``(x, mu, converged, iterations)``; on failure ``x`` and ``mu`` are the
    zero vectors.
    """
    d = lower.size
    zero = np.zeros(max(d - 1, 0))
    if d <= 1:
        return zero, zero.copy(), True, 0
    y = np.zeros(2 * (d - 1))
    g, J = grad_psi(y, strict, lower, upper)
    gnorm = np.linalg.norm(g)
    for it in range(max_iter + 1):
        if gnorm < tol:
            return y[: d - 1].copy(), y[d - 1 :].copy(), True, it
        if it == max_iter or not np.isfinite(gnorm):
            break
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-10:
            y_new = y + t * step
            g_new, J_new = grad_psi(y_new, strict, lower, upper)
            gnorm_new = np.linalg.norm(g_new)
            if np.isfinite(gnorm_new) and gnorm_new < gnorm:
                break
            t *= 0.5
        else:
            break
        y, g, J, gnorm = y_new, g_new, J_new, gnorm_new
    return zero, zero.copy(), False, max_iter


def prepare(cov, lower, upper, tilt=True):
    """Factorize, reorder and (optionally) solve for the tilting parameters."""
    chol, lo, up, perm = cholperm(cov, lower, upper)
    scale = np.diag(chol).copy()
    unit = chol / scale[:, None]
    strict = unit - np.eye(unit.shape[0])
    lo = lo / scale
    up = up / scale
    d = lo.size
    if tilt:
        x, mu, ok, iters = solve_saddle(strict, lo, up)
    else:
        x = np.zeros(max(d - 1, 0))
        mu = x.copy()
        ok, iters = False, 0
    tilted = bool(tilt and ok)
    # zero tilting: each sequential weight is a probability, so 0 bounds the log weight
    psi_star = psi(x, mu, strict, lo, up) if tilted else 0.0
    return TiltedProblem(chol, scale, strict, lo, up, perm, x, mu, psi_star, tilted, iters)


def sequential_draws(tp, uniforms, full):
    """Push uniforms through the tilted sequential proposal.

    Parameters
    ----------
    tp : TiltedProblem
    uniforms : ndarray, shape (N, d) if ``full`` else (N, d - 1)
    full : bool
        If True every coordinate is drawn (sampler use) and the returned
        log weights are the tilted likelihood ratios. If False the last
        coordinate is integrated out analytically (probability estimation).

    Returns
    -------
    logw : ndarray (N,)
    Z : ndarray (N, d)
        Standardized draws in the permuted order.
    """
    d = tp.dim
    n_pts = uniforms.shape[0]
    mu = np.zeros(d)
    mu[: d - 1] = tp.mu
    Z = np.zeros((n_pts, d))
    logw = np.zeros(n_pts)
    steps = d if full else d - 1
    interval = _interval_kernel(tp)
    for k in range(steps):
        col = Z[:, :k] @ tp.strict[k, :k]
        tl = tp.lower[k] - mu[k] - col
        tu = tp.upper[k] - mu[k] - col
        logp, z = interval(uniforms[:, k], tl, tu)
        Z[:, k] = mu[k] + z
        logw += logp + 0.5 * mu[k] ** 2 - mu[k] * Z[:, k]
    if not full:
        col = Z[:, : d - 1] @ tp.strict[d - 1, : d - 1]
        logw += log_interval_prob(tp.lower[d - 1] - col, tp.upper[d - 1] - col)
    return logw, Z


def _interval_kernel(tp):
    # one-sided boxes (orthant CDFs, lower truncation) avoid the general branching
    if np.all(tp.lower == -np.inf):
        return _below
    if np.all(tp.upper == np.inf):
        return _above
    return _two_sided


def _two_sided(q, tl, tu):
    return log_interval_prob(tl, tu), trunc_norm_ppf(q, tl, tu)


def _below(q, tl, tu):
    logp = log_ndtr(tu)
    return logp, np.minimum(ndtri_exp(np.minimum(np.log(q) + logp, 0.0)), tu)


def _above(q, tl, tu):
    logp = log_ndtr(-tl)
    return logp, np.maximum(-ndtri_exp(np.minimum(np.log1p(-q) + logp, 0.0)), tl)


def to_original(tp, Z):
    """Map standardized permuted draws back to the original coordinates."""
    X = np.empty_like(Z)
    X[:, tp.perm] = Z @ tp.chol.T
    return X
