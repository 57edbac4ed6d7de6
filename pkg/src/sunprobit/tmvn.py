"""Exact sampling from zero-mean normals truncated below a bound vector.

Proposals come from the exponentially tilted sequential Gaussian built by
:mod:`sunprobit.tilting`; accept-reject against the saddle-point bound
makes the accepted draws exact.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import tilting
from .errors import InfeasibleRegion, LowAcceptance, TiltingFallback
from .linalg import as_symmetric, cholesky, psd_sqrt
from .orthant import qmc_log_prob
from .seeding import seed_sequence

MIN_BLOCK = 1024
MAX_BLOCKS = 10_000
LOW_ACCEPTANCE = 1e-3


@dataclass(frozen=True)
class TruncNormSpec:
    """``N(0, cov)`` restricted to ``x >= lower`` (entries may be ``-inf``)."""

    cov: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        cov = as_symmetric(self.cov)
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        if cov.shape != (lower.size, lower.size):
            raise ValueError(f"lower has length {lower.size} but cov has shape {cov.shape}")
        if np.any(np.isnan(lower)) or np.any(lower == np.inf):
            raise InfeasibleRegion("lower bounds must be finite or -inf")
        cholesky(cov)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "lower", lower)

    @property
    def dim(self):
        return self.lower.size


@dataclass(frozen=True)
class TruncSampleBatch:
    draws: np.ndarray
    acceptance_rate: float
    proposals_used: int
    tilted: bool = True
    log_prob: float = 0.0


def sample_tmvn(spec, count, seed=None):
    """Draw ``count`` independent exact samples from ``spec``.

    Parameters
    ----------
    spec : TruncNormSpec
    count : int
    seed : int or numpy.random.SeedSequence, optional

    Returns
    -------
    TruncSampleBatch
        ``draws`` has shape ``(count, n)``. ``log_prob`` is a coarse
        estimate of the log probability of the truncation region.

    Raises
    ------
    InfeasibleRegion
        If the region has numerically zero probability.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    d = spec.dim
    ss = seed_sequence(seed)
    tp = tilting.prepare(spec.cov, spec.lower, np.full(d, np.inf))
    if not tp.tilted:
        warnings.warn(
            "saddle-point solve did not converge; proposing without tilting",
            TiltingFallback,
            stacklevel=2,
        )
    check_ss, sample_ss = ss.spawn(2)
    log_prob = _region_log_prob(tp, check_ss)
    if not np.isfinite(log_prob) or not np.isfinite(tp.psi_star):
        raise InfeasibleRegion("truncation region has zero probability")

    block = max(2 * count, MIN_BLOCK)
    kept = []
    n_kept = 0
    accepted = 0
    proposals = 0
    for _ in range(MAX_BLOCKS):
        rng = np.random.default_rng(sample_ss.spawn(1)[0])
        logw, Z = tilting.sequential_draws(tp, rng.random((block, d)), full=True)
        ok = -np.log(rng.random(block)) > tp.psi_star - logw
        proposals += block
        accepted += int(ok.sum())
        if ok.any():
            kept.append(Z[ok])
            n_kept += int(ok.sum())
        if n_kept >= count:
            break
    else:
        raise RuntimeError(
            f"only {n_kept} of {count} draws accepted after {proposals} proposals"
        )
    rate = accepted / proposals
    if rate < LOW_ACCEPTANCE:
        warnings.warn(f"acceptance rate {rate:.1e} is below {LOW_ACCEPTANCE}", LowAcceptance, stacklevel=2)
    Z = np.concatenate(kept)[:count]
    draws = np.maximum(tilting.to_original(tp, Z), spec.lower)
    return TruncSampleBatch(draws, rate, proposals, tp.tilted, log_prob)


def _region_log_prob(tp, ss):
    if tp.dim == 1:
        return float(tp.psi_star)
    rng = np.random.default_rng(ss)
    est = qmc_log_prob(tp, accuracy=0.05, max_points=12 * 1024, replicates=12, rng=rng)
    return est.log_value


def sample_mvn(cov, count, seed=None):
    """``count`` zero-mean Gaussian draws as a ``(count, p)`` array.

    Positive semi-definite covariances are accepted (jittered Cholesky,
    then a clipped eigendecomposition), so an all-zero covariance yields
    all-zero draws.
    """
    factor = psd_sqrt(cov)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.standard_normal((count, factor.shape[0])) @ factor.T
