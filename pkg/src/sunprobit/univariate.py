"""Tail-stable one-dimensional standard normal helpers.

Everything here is vectorized over numpy broadcasting and works in log
space so that intervals far in either tail keep full relative accuracy.
"""

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri, ndtri_exp

LOG_2PI = np.log(2.0 * np.pi)


def log_phi(x):
    """Log density of the standard normal."""
    x = np.asarray(x, dtype=float)
    return -0.5 * x * x - 0.5 * LOG_2PI


def log_interval_prob(a, b):
    """``log(Phi(b) - Phi(a))`` for ``a <= b``, accurate in both tails."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.empty(a.shape)
    upper = a > 0
    lower = b < 0
    mid = ~(upper | lower)
    with np.errstate(divide="ignore", invalid="ignore"):
        if np.any(upper):
            pa = log_ndtr(-a[upper])
            pb = log_ndtr(-b[upper])
            out[upper] = pa + np.log1p(-np.exp(pb - pa))
        if np.any(lower):
            pa = log_ndtr(a[lower])
            pb = log_ndtr(b[lower])
            out[lower] = pb + np.log1p(-np.exp(pa - pb))
        if np.any(mid):
            out[mid] = np.log1p(-ndtr(a[mid]) - ndtr(-b[mid]))
    out[a >= b] = -np.inf
    return out


def _lower_tail_ppf(q, a, b):
    # interval lies in (-inf, 0]; invert through log CDF
    la = log_ndtr(a)
    lb = log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = lb + np.log(q + (1.0 - q) * np.exp(la - lb))
    return ndtri_exp(np.minimum(logf, 0.0))


def trunc_norm_ppf(q, a, b):
    """Quantile function of the standard normal truncated to ``[a, b]``.

    ``q`` is a probability in [0, 1]. Intervals wholly in one tail are
    inverted through the log CDF (reflected for the upper tail), so
    truncation points like ``a = 30`` are handled without underflow.
    """
    q, a, b = np.broadcast_arrays(
        np.asarray(q, dtype=float), np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    )
    out = np.empty(q.shape)
    upper = a > 0
    lower = b <= 0
    mid = ~(upper | lower)
    if np.any(lower):
        out[lower] = _lower_tail_ppf(q[lower], a[lower], b[lower])
    if np.any(upper):
        out[upper] = -_lower_tail_ppf(1.0 - q[upper], -b[upper], -a[upper])
    if np.any(mid):
        qm, am, bm = q[mid], a[mid], b[mid]
        pa = ndtr(am)
        pb = ndtr(bm)
        f = pa + qm * (pb - pa)
        # complement of f, computed without cancellation when f is near 1
        fc = ndtr(-bm) + (1.0 - qm) * (pb - pa)
        res = np.where(f <= 0.5, ndtri(f), -ndtri(fc))
        out[mid] = res
    return np.clip(out, a, b)


def sample_trunc_norm(a, b, rng, size=None):
    """Draw standard normals truncated to ``[a, b]`` by inverse transform."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    shape = np.broadcast_shapes(a.shape, b.shape) if size is None else size
    return trunc_norm_ppf(rng.random(shape), a, b)


def trunc_norm_mean(a, b):
    """Mean of the standard normal truncated to ``[a, b]``."""
    w = log_interval_prob(a, b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        ea = np.where(np.isfinite(a), np.exp(log_phi(a) - w), 0.0)
        eb = np.where(np.isfinite(b), np.exp(log_phi(b) - w), 0.0)
    return ea - eb


def trunc_norm_cdf(x, a, b):
    """CDF of the standard normal truncated to ``[a, b]``."""
    x = np.clip(np.asarray(x, dtype=float), a, b)
    return np.exp(log_interval_prob(a, x) - log_interval_prob(a, b))
