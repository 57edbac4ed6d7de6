"""Gaussian orthant probabilities, ``log P(X <= a)`` for ``X ~ N(0, cov)``.

The estimator is separation-of-variables quasi-Monte Carlo over a
randomly shifted Richtmyer (Kronecker) lattice with the baker's
transform, combined with minimax exponential tilting and greedy variable
reordering. Replicate shifts give the standard-error estimate.
Independent blocks of the covariance, infinite limits and one-dimensional
problems are reduced exactly before any sampling is done.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.special import log_ndtr, logsumexp, ndtri_exp

from . import tilting
from .errors import BudgetExceeded, TiltingFallback
from .linalg import as_symmetric, cholesky

DEFAULT_ACCURACY = 1e-4
DEFAULT_MAX_POINTS = 2**19
DEFAULT_REPLICATES = 12
_FIRST_BLOCK = 256
_CHUNK_ELEMENTS = 2**22
_U_CLIP = 1e-15
PRODUCT_RULE_MAX_DIM = 4
_GL_ORDER = {2: 64, 3: 40, 4: 20}


def first_primes(count):
    """The first ``count`` prime numbers."""
    if count <= 0:
        return np.zeros(0, dtype=np.int64)
    limit = max(16, int(count * (np.log(count + 1) + np.log(np.log(count + 2)) + 3)))
    while True:
        sieve = np.ones(limit + 1, dtype=bool)
        sieve[:2] = False
        for i in range(2, int(limit**0.5) + 1):
            if sieve[i]:
                sieve[i * i :: i] = False
        primes = np.flatnonzero(sieve)
        if primes.size >= count:
            return primes[:count]
        limit *= 2


def lattice_base(start, count, generator):
    """Unshifted Kronecker points ``frac(k * generator)`` for ``k = start ..``."""
    ks = np.arange(start, start + count, dtype=float)
    base = np.outer(ks, generator)
    base -= np.floor(base)
    return base


def shifted(base, shift):
    """Apply a random shift modulo 1 and the baker's transform."""
    u = base + shift
    u -= u >= 1.0
    u = np.abs(2.0 * u - 1.0)
    return np.clip(u, _U_CLIP, 1.0 - _U_CLIP, out=u)


def lattice_points(start, count, generator, shift):
    """Baker-transformed shifted Kronecker points ``k = start .. start+count-1``."""
    return shifted(lattice_base(start, count, generator), shift)


@dataclass(frozen=True)
class OrthantProblem:
    """``Phi_n(upper; cov)`` with accuracy controls.

    ``accuracy`` is the target relative standard error and ``max_points``
    the total QMC budget summed over replicates.
    """

    upper: np.ndarray
    cov: np.ndarray
    accuracy: float = DEFAULT_ACCURACY
    max_points: int = DEFAULT_MAX_POINTS
    replicates: int = DEFAULT_REPLICATES
    seed: int = 0

    def __post_init__(self):
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        cov = as_symmetric(self.cov) if np.size(self.cov) else np.zeros((0, 0))
        if upper.ndim != 1 or cov.shape != (upper.size, upper.size):
            raise ValueError(f"upper has length {upper.size} but cov has shape {cov.shape}")
        if np.any(np.isnan(upper)):
            raise ValueError("upper limits contain NaN")
        if not 0 < self.accuracy <= 0.1:
            raise ValueError("accuracy must lie in (0, 0.1]")
        if self.replicates < 2:
            raise ValueError("at least two replicates are needed for an error estimate")
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.upper.size


@dataclass(frozen=True)
class OrthantEstimate:
    log_value: float
    rel_error: float
    points_used: int
    converged: bool = True
    tilted: bool = True

    @property
    def value(self):
        return float(np.exp(self.log_value))


@dataclass
class _Accumulator:
    log_values: list = field(default_factory=list)
    rel_errors: list = field(default_factory=list)
    points: int = 0
    converged: bool = True
    tilted: bool = True

    def add(self, est):
        self.log_values.append(est.log_value)
        self.rel_errors.append(est.rel_error)
        self.points += est.points_used
        self.converged &= est.converged
        self.tilted &= est.tilted

    def result(self):
        log_value = float(np.sum(self.log_values)) if self.log_values else 0.0
        # relative errors of a product add in quadrature to first order
        rel = float(np.sqrt(np.sum(np.square(self.rel_errors)))) if self.rel_errors else 0.0
        return OrthantEstimate(log_value, rel, self.points, self.converged, self.tilted)


def independent_blocks(cov, rtol=1e-12):
    """Index sets of mutually uncorrelated coordinate blocks."""
    n = cov.shape[0]
    sd = np.sqrt(np.abs(np.diag(cov)))
    linked = np.abs(cov) > rtol * np.outer(sd, sd)
    np.fill_diagonal(linked, False)
    count, labels = connected_components(linked, directed=False)
    return [np.flatnonzero(labels == c) for c in range(count)]


def phi_n(problem):
    """Estimate ``log Phi_n(upper; cov)``.

    Deterministic for a given ``problem.seed``. When the budget runs out
    before ``accuracy`` is reached a :class:`BudgetExceeded` warning is
    issued and the best estimate is returned with ``converged=False``.

    Examples
    --------
    >>> est = phi_n(OrthantProblem(np.zeros(2), [[1.0, 0.5], [0.5, 1.0]]))
    >>> round(est.value, 6)
    0.333333
    """
    upper, cov = problem.upper, problem.cov
    if np.any(upper == -np.inf):
        return OrthantEstimate(-np.inf, 0.0, 0)
    keep = np.flatnonzero(np.isfinite(upper))
    if keep.size == 0:
        return OrthantEstimate(0.0, 0.0, 0)
    upper = upper[keep]
    cov = cov[np.ix_(keep, keep)]
    if np.any(np.diag(cov) <= 0):
        cholesky(cov)  # raises NotPositiveDefinite with a consistent message

    acc = _Accumulator()
    for block in independent_blocks(cov):
        a = upper[block]
        c = cov[np.ix_(block, block)]
        if block.size == 1:
            acc.add(OrthantEstimate(float(log_ndtr(a[0] / np.sqrt(c[0, 0]))), 0.0, 0))
        else:
            acc.add(_phi_block(a, c, problem))
    est = acc.result()
    if not est.converged:
        warnings.warn(
            f"orthant estimate reached rel_error {est.rel_error:.2e} "
            f"(target {problem.accuracy:.0e}) with {est.points_used} points",
            BudgetExceeded,
            stacklevel=2,
        )
    return est


def _phi_block(upper, cov, problem):
    cholesky(cov)
    tp = tilting.prepare(cov, np.full(upper.size, -np.inf), upper)
    if not tp.tilted:
        warnings.warn("saddle-point solve did not converge; using zero tilting", TiltingFallback, stacklevel=3)
    rng = np.random.default_rng(problem.seed)
    return qmc_log_prob(tp, problem.accuracy, problem.max_points, problem.replicates, rng)


def qmc_log_prob(tp, accuracy, max_points, replicates, rng):
    """Randomized-lattice estimate of the probability held by ``tp``."""
    d = tp.dim
    gen = np.sqrt(first_primes(d - 1).astype(float))
    shifts = rng.random((replicates, d - 1))
    run_lse = np.full(replicates, -np.inf)
    n_done = 0
    block = _FIRST_BLOCK
    rows_per_chunk = max(1, _CHUNK_ELEMENTS // max(d, 1))
    while True:
        parts = [[] for _ in range(replicates)]
        for start in range(0, block, rows_per_chunk):
            cnt = min(rows_per_chunk, block - start)
            base = lattice_base(n_done + start + 1, cnt, gen)
            for r in range(replicates):
                logw, _ = tilting.sequential_draws(tp, shifted(base, shifts[r]), full=False)
                parts[r].append(logsumexp(logw))
        for r in range(replicates):
            run_lse[r] = np.logaddexp(run_lse[r], logsumexp(parts[r]))
        n_done += block
        rep_means = run_lse - np.log(n_done)
        log_value = float(logsumexp(rep_means) - np.log(replicates))
        rel = _rel_error(rep_means, log_value)
        used = replicates * n_done
        if rel <= accuracy:
            return OrthantEstimate(log_value, rel, used, True, tp.tilted)
        block = n_done
        if used + replicates * block > max_points:
            return OrthantEstimate(log_value, rel, used, False, tp.tilted)


def _rel_error(rep_log_means, log_value):
    if not np.isfinite(log_value):
        return 0.0
    ratios = np.exp(rep_log_means - log_value)
    return float(np.std(ratios, ddof=1) / np.sqrt(ratios.size))


def phi_n_batch(problems, return_exceptions=False):
    """Evaluate :func:`phi_n` on each problem independently.

    With ``return_exceptions=True`` a failing element's exception is placed
    in the output list instead of being raised; otherwise every element is
    attempted and the first failure is raised afterwards.
    """
    results = []
    first_error = None
    for prob in problems:
        try:
            results.append(phi_n(prob))
        except (ValueError, np.linalg.LinAlgError) as exc:
            if first_error is None:
                first_error = exc
            results.append(exc)
    if first_error is not None and not return_exceptions:
        raise first_error
    return results


def log_cdf_shared(
    uppers,
    cov,
    accuracy=1e-5,
    max_points=12 * 2048,
    replicates=DEFAULT_REPLICATES,
    seed=0,
):
    """``log Phi_n(a; cov)`` for many limit vectors ``a`` sharing one covariance.

    Used for density evaluation on grids, where one tilting solve per point
    would dominate. Each point gets its own greedy variable ordering
    (computed for all points at once) and untilted separation of
    variables. Blocks of dimension 2 to 4 are integrated with a
    Gauss-Legendre product rule, the error being estimated from a rule of
    half the order; larger blocks use the randomized lattice, doubled until
    every point meets ``accuracy`` or ``max_points`` (per point) is spent.

    Returns
    -------
    log_values, rel_errors : ndarray (m,)
    """
    uppers = np.atleast_2d(np.asarray(uppers, dtype=float))
    cov = as_symmetric(cov)
    m, n = uppers.shape
    if cov.shape != (n, n):
        raise ValueError("limit vectors and covariance disagree in dimension")
    out = np.zeros(m)
    err = np.zeros(m)
    if n == 0 or m == 0:
        return out, err
    dead = np.any(uppers == -np.inf, axis=1)
    out[dead] = -np.inf
    live = np.flatnonzero(~dead)
    for block in independent_blocks(cov):
        a = uppers[np.ix_(live, block)]
        c = cov[np.ix_(block, block)]
        if block.size == 1:
            out[live] += log_ndtr(a[:, 0] / np.sqrt(c[0, 0]))
            continue
        strict, a_std = _pointwise_order(a, c)
        if block.size <= PRODUCT_RULE_MAX_DIM:
            lv, re = _sov_product(strict, a_std)
        else:
            lv, re = _sov_lattice(strict, a_std, accuracy, max_points, replicates, seed)
        out[live] += lv
        err[live] = np.sqrt(err[live] ** 2 + re**2)
    return out, err


def _pointwise_order(uppers, cov):
    # greedy ordering of cholperm, run for every row of ``uppers`` at once;
    # returns unit-diagonal strict factors (m, d, d) and scaled limits (m, d)
    m, d = uppers.shape
    perm = np.tile(np.arange(d), (m, 1))
    L = np.zeros((m, d, d))
    z = np.zeros((m, d))
    up = uppers.copy()
    for j in range(d):
        rest = perm[:, j:]
        var = cov[rest, rest] - np.sum(L[:, j:, :j] ** 2, axis=2)
        sd = np.sqrt(np.maximum(var, np.finfo(float).eps))
        shift = np.einsum("mik,mk->mi", L[:, j:, :j], z[:, :j])
        k = j + np.argmin(log_ndtr((up[:, j:] - shift) / sd), axis=1)
        swap = np.flatnonzero(k != j)
        if swap.size:
            kk = k[swap]
            for arr in (perm, up):
                tmp = arr[swap, j].copy()
                arr[swap, j] = arr[swap, kk]
                arr[swap, kk] = tmp
            tmp = L[swap, j, :].copy()
            L[swap, j, :] = L[swap, kk, :]
            L[swap, kk, :] = tmp
        pj = perm[:, j]
        diag = np.sqrt(np.maximum(cov[pj, pj] - np.sum(L[:, j, :j] ** 2, axis=1), np.finfo(float).eps))
        L[:, j, j] = diag
        if j + 1 < d:
            below = cov[perm[:, j + 1 :], pj[:, None]]
            L[:, j + 1 :, j] = (below - np.einsum("mik,mk->mi", L[:, j + 1 :, :j], L[:, j, :j])) / diag[:, None]
        t = (up[:, j] - np.einsum("mk,mk->m", L[:, j, :j], z[:, :j])) / diag
        # mean of a standard normal truncated above at t
        with np.errstate(over="ignore", invalid="ignore"):
            z[:, j] = np.where(np.isfinite(t), -np.exp(-0.5 * t * t - log_ndtr(t)) / np.sqrt(2 * np.pi), 0.0)
    scale = np.einsum("mii->mi", L)
    strict = L / scale[:, :, None] - np.eye(d)
    return strict, up / scale


def _sov_product(strict, a):
    m, d = a.shape
    hi = _product_rule(strict, a, _GL_ORDER[d])
    lo = _product_rule(strict, a, _GL_ORDER[d] // 2)
    with np.errstate(invalid="ignore"):
        rel = np.where(np.isfinite(hi), np.abs(np.expm1(lo - hi)), 0.0)
    return hi, rel


def _product_rule(strict, a, order):
    d = a.shape[1]
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    # quintic smoothing map: flattens the endpoint singularities of the
    # separated integrand so the Gauss rule converges fast even in the tails
    x = t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    w = 15.0 * w * t * t * (1.0 - t) ** 2
    mesh = np.meshgrid(*([x] * (d - 1)), indexing="ij")
    logU = np.log(np.column_stack([g.ravel() for g in mesh]))
    logW = np.sum(np.log(np.meshgrid(*([w] * (d - 1)), indexing="ij")), axis=0).ravel()
    out = np.empty(a.shape[0])
    chunk = max(1, _CHUNK_ELEMENTS // logU.shape[0])
    for s in range(0, a.shape[0], chunk):
        rows = slice(s, s + chunk)
        out[rows] = logsumexp(_sov_untilted(strict[rows], a[rows], logU) + logW, axis=1)
    return out


def _sov_lattice(strict, a, accuracy, max_points, replicates, seed):
    m, d = a.shape
    gen = np.sqrt(first_primes(d - 1).astype(float))
    shifts = np.random.default_rng(seed).random((replicates, d - 1))

    run_lse = np.full((m, replicates), -np.inf)
    n_done = 0
    block = _FIRST_BLOCK
    while True:
        base = lattice_base(n_done + 1, block, gen)
        pts_chunk = max(1, _CHUNK_ELEMENTS // block)
        for r in range(replicates):
            logU = np.log(shifted(base, shifts[r]))
            for s in range(0, m, pts_chunk):
                rows = slice(s, min(m, s + pts_chunk))
                logw = _sov_untilted(strict[rows], a[rows], logU)
                run_lse[rows, r] = np.logaddexp(run_lse[rows, r], logsumexp(logw, axis=1))
        n_done += block
        rep_means = run_lse - np.log(n_done)
        log_values = logsumexp(rep_means, axis=1) - np.log(replicates)
        with np.errstate(invalid="ignore"):
            ratios = np.exp(rep_means - log_values[:, None])
        rel = np.where(
            np.isfinite(log_values), np.std(ratios, axis=1, ddof=1) / np.sqrt(replicates), 0.0
        )
        if np.all(rel <= accuracy) or replicates * 2 * n_done > max_points:
            return log_values, rel
        block = n_done


def _sov_untilted(strict, a, logU):
    # strict: (m, d, d) per-point factors, a: (m, d) scaled limits,
    # logU: (N, d-1); returns log weights (m, N)
    m, d = a.shape
    N = logU.shape[0]
    Z = np.zeros((d - 1, m, N))
    logw = np.zeros((m, N))
    for k in range(d):
        col = np.einsum("mj,jmn->mn", strict[:, k, :k], Z[:k]) if k else 0.0
        lp = log_ndtr(a[:, k, None] - col)
        logw += lp
        if k < d - 1:
            Z[k] = ndtri_exp(np.minimum(logU[None, :, k] + lp, 0.0))
    return logw
