"""Conjugate Bayesian probit regression.

With a Gaussian prior ``N_p(xi, Omega)`` on the coefficients and data
``y_i ~ Bern(Phi(x_i' beta))`` the posterior is a SUN_{p,n} with
``D = diag(2y - 1) X`` and ``s = diag(D Omega D' + I)^{1/2}``:

    xi_post = xi, Omega_post = Omega,
    Delta_post = Omega_bar omega D' s^{-1},
    gamma_post = s^{-1} D xi,
    Gamma_post = s^{-1} (D Omega D' + I) s^{-1}.

A SUN prior is updated the same way by appending latent coordinates, which
gives exact sequential updating. Evidence, predictive probabilities and the
posterior mean are ratios of Gaussian orthant probabilities; the posterior
itself can be sampled exactly with independent draws.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .errors import BudgetExceeded, DimensionMismatch, EmptyModelSet, IndexOutOfRange, NonBinaryResponse
from .linalg import as_symmetric, cholesky, correlation_decompose, solve_spd
from .orthant import DEFAULT_ACCURACY, OrthantProblem, phi_n, phi_n_batch
from .seeding import seed_sequence
from .sun import SunParams, SunSampleBatch, sun_sample
from .tmvn import TruncNormSpec, sample_mvn, sample_tmvn
from .univariate import log_phi

PREDICT_WARN_ERROR = 1e-3


@dataclass(frozen=True)
class BinaryDataset:
    """Binary responses ``y`` (length n) and design matrix ``X`` (n x p).

    ``n = 0`` is allowed so that an empty batch can be fed to a sequential
    update; ``p`` must be at least one.
    """

    y: np.ndarray
    X: np.ndarray
    feature_names: tuple = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y_raw = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(y_raw.size, -1) if y_raw.size else X.reshape(0, -1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DimensionMismatch("X must be a matrix with at least one column")
        if X.shape[0] != y_raw.size:
            raise DimensionMismatch(f"y has {y_raw.size} entries but X has {X.shape[0]} rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("X has non-finite entries")
        if not np.all((y_raw == 0) | (y_raw == 1)):
            raise NonBinaryResponse("responses must be 0 or 1")
        names = self.feature_names
        if names is not None:
            names = tuple(str(v) for v in names)
            if len(names) != X.shape[1]:
                raise DimensionMismatch("one feature name per column is required")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y_raw.astype(int))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def D(self):
        """``diag(2y - 1) X``."""
        return (2 * self.y - 1)[:, None] * self.X

    def columns(self, indices):
        idx = np.asarray(indices, dtype=int)
        names = None if self.feature_names is None else tuple(self.feature_names[i] for i in idx)
        return BinaryDataset(self.y, self.X[:, idx], names)

    def concat(self, other):
        if other.p != self.p:
            raise DimensionMismatch("datasets have different numbers of columns")
        return BinaryDataset(
            np.concatenate([self.y, other.y]), np.vstack([self.X, other.X]), self.feature_names
        )


@dataclass(frozen=True)
class PosteriorFit:
    """A fitted posterior together with what produced it.

    ``log_evidence`` is the log marginal likelihood of the data under the
    prior; ``evidence_rel_error`` is the relative error of its orthant
    estimate. ``prior_latent`` is the latent dimension of the prior (zero
    for a Gaussian prior).
    """

    posterior: SunParams
    D: np.ndarray
    s: np.ndarray
    prior_kind: str
    log_evidence: float
    evidence_rel_error: float = 0.0
    prior_latent: int = 0
    accuracy: float = DEFAULT_ACCURACY
    seed: int = 0

    @property
    def xi(self):
        return self.posterior.xi

    @property
    def omega_mat(self):
        return self.posterior.omega_mat


@dataclass(frozen=True)
class ModelSpec:
    """A candidate model: a subset of columns with its own Gaussian prior."""

    columns: tuple
    xi: np.ndarray
    omega_mat: np.ndarray
    prior_prob: float = 1.0
    name: str = None

    def __post_init__(self):
        cols = tuple(int(c) for c in np.atleast_1d(self.columns))
        if len(cols) == 0:
            raise ValueError("a model needs at least one column")
        if len(set(cols)) != len(cols):
            raise ValueError("model columns must be distinct")
        k = len(cols)
        xi = np.broadcast_to(np.asarray(self.xi, dtype=float), (k,)).copy()
        om = np.asarray(self.omega_mat, dtype=float)
        om = om * np.eye(k) if om.ndim == 0 else om.reshape(k, k)
        if not 0 <= self.prior_prob <= 1:
            raise ValueError("prior_prob must lie in [0, 1]")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "omega_mat", as_symmetric(om))


@dataclass(frozen=True)
class ModelPosterior:
    probabilities: np.ndarray
    log_evidence: np.ndarray
    log_bayes_factors: np.ndarray  # [j, k] = log ML_j - log ML_k
    rel_errors: np.ndarray
    names: list = field(default_factory=list)


def _check_prior(xi, Omega, p):
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (p,)).copy()
    Omega = np.asarray(Omega, dtype=float)
    if Omega.ndim == 0:
        Omega = Omega * np.eye(p)
    if Omega.shape != (p, p):
        raise DimensionMismatch(f"Omega must be {p}x{p}, got {Omega.shape}")
    Omega = as_symmetric(Omega)
    cholesky(Omega, max_attempts=0)
    return xi, Omega


def _likelihood_blocks(D, xi, Omega):
    # pieces shared by every Gaussian-prior computation; only n x n systems appear
    OD = Omega @ D.T
    M = D @ OD + np.eye(D.shape[0])
    M = 0.5 * (M + M.T)
    s = np.sqrt(np.diag(M))
    return OD, M, s


def _orthant(upper, cov, accuracy, seed):
    if upper.size == 0:
        return 0.0, 0.0
    est = phi_n(OrthantProblem(upper, cov, accuracy=accuracy, seed=seed))
    return est.log_value, est.rel_error


def fit_gaussian_prior(data, xi, Omega, accuracy=DEFAULT_ACCURACY, seed=0):
    """Posterior under a ``N_p(xi, Omega)`` prior.

    Parameters
    ----------
    data : BinaryDataset
    xi : array_like or float
        Prior mean (a scalar is broadcast).
    Omega : array_like or float
        Prior covariance (a scalar means ``Omega * I``).
    accuracy : float
        Relative-error target for the evidence orthant probability.
    seed : int

    Returns
    -------
    PosteriorFit

    Examples
    --------
    >>> fit = fit_gaussian_prior(BinaryDataset([1], [[1.0]]), 0.0, 1.0)
    >>> round(float(fit.posterior.delta[0, 0]), 6)
    0.707107
    """
    xi, Omega = _check_prior(xi, Omega, data.p)
    D = data.D
    if data.n == 0:
        return PosteriorFit(SunParams.gaussian(xi, Omega), D, np.zeros(0), "gaussian", 0.0, 0.0, 0, accuracy, seed)
    OD, M, s = _likelihood_blocks(D, xi, Omega)
    omega, _ = correlation_decompose(Omega)
    delta = OD / omega[:, None] / s[None, :]
    gamma = (D @ xi) / s
    gamma_mat = M / np.outer(s, s)
    np.fill_diagonal(gamma_mat, 1.0)
    post = SunParams(xi, Omega, delta, gamma, gamma_mat)
    log_ev, rel = _orthant(gamma, gamma_mat, accuracy, seed)
    return PosteriorFit(post, D, s, "gaussian", log_ev, rel, 0, accuracy, seed)


def fit_sun_prior(data, prior, accuracy=DEFAULT_ACCURACY, seed=0):
    """Posterior under a SUN prior with latent dimension ``m``.

    The result is a SUN_{p, m+n}: the prior's latent coordinates come
    first, then one per observation. Feeding the output of one fit as the
    prior of the next reproduces the pooled fit exactly.

    The evidence is ``Phi_{m+n}(gamma_post; Gamma_post) / Phi_m(gamma; Gamma)``.
    """
    if prior.p != data.p:
        raise DimensionMismatch(f"prior has dimension {prior.p}, data has {data.p} columns")
    if prior.n == 0:
        return fit_gaussian_prior(data, prior.xi, prior.omega_mat, accuracy, seed)
    D = data.D
    if data.n == 0:
        return PosteriorFit(prior, D, np.zeros(0), "sun", 0.0, 0.0, prior.n, accuracy, seed)
    xi, Omega = prior.xi, prior.omega_mat
    OD, M, s = _likelihood_blocks(D, xi, Omega)
    omega = prior.omega
    new_delta = OD / omega[:, None] / s[None, :]
    delta = np.hstack([prior.delta, new_delta])
    gamma = np.concatenate([prior.gamma, (D @ xi) / s])
    cross = (D * omega[None, :]) @ prior.delta / s[:, None]
    lower = M / np.outer(s, s)
    np.fill_diagonal(lower, 1.0)
    gamma_mat = np.block([[prior.gamma_mat, cross.T], [cross, lower]])
    post = SunParams(xi, Omega, delta, gamma, gamma_mat)
    num, rel_num = _orthant(gamma, gamma_mat, accuracy, seed)
    den, rel_den = _orthant(prior.gamma, prior.gamma_mat, accuracy, seed)
    return PosteriorFit(
        post, D, s, "sun", num - den, float(np.hypot(rel_num, rel_den)), prior.n, accuracy, seed
    )


def _require_gaussian(fit, what):
    if fit.prior_kind != "gaussian":
        raise ValueError(f"{what} in closed form needs a Gaussian-prior fit")


def _eta_log(gamma, gamma_mat, accuracy, seed):
    # log eta_i = log phi(gamma_i) + log Phi_{n-1}(gamma_{-i} - G_{-i} gamma_i; G_{-i,-i} - G_{-i} G_{-i}')
    n = gamma.size
    out = log_phi(gamma)
    if n == 1:
        return out, np.zeros(1)
    problems = []
    for i in range(n):
        rest = np.delete(np.arange(n), i)
        g = gamma_mat[rest, i]
        cov = gamma_mat[np.ix_(rest, rest)] - np.outer(g, g)
        problems.append(OrthantProblem(gamma[rest] - g * gamma[i], cov, accuracy=accuracy, seed=seed))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BudgetExceeded)
        ests = phi_n_batch(problems)
    for w in caught:
        if not issubclass(w.category, BudgetExceeded):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    missed = [e.rel_error for e in ests if not e.converged]
    if missed:
        warnings.warn(
            f"{len(missed)} of {n} mean-term orthant estimates missed the accuracy target "
            f"(worst rel_error {max(missed):.1e})",
            BudgetExceeded,
            stacklevel=3,
        )
    return out + np.array([e.log_value for e in ests]), np.array([e.rel_error for e in ests])


def posterior_mean(fit, accuracy=None, seed=None, return_error=False, draws=100_000):
    """Posterior mean of the coefficients.

    For a Gaussian prior this is the closed form

        xi + Omega D' s^{-1} eta / Phi_n(gamma_post; Gamma_post)

    with ``eta`` built from ``n`` orthant probabilities of dimension
    ``n - 1``. Under a SUN prior no closed form is used; the mean is
    estimated from ``draws`` exact posterior samples.

    Parameters
    ----------
    fit : PosteriorFit
    accuracy, seed : optional
        Default to the values the fit was made with.
    return_error : bool
        Also return a per-coordinate error: the propagated orthant relative
        error (closed form) or the Monte Carlo standard error.
    draws : int
        Sample size for the SUN-prior route.
    """
    accuracy = fit.accuracy if accuracy is None else accuracy
    seed = fit.seed if seed is None else seed
    post = fit.posterior
    if fit.prior_kind != "gaussian":
        batch = sample_posterior(fit, draws, seed)
        mean = batch.draws.mean(axis=0)
        se = batch.draws.std(axis=0, ddof=1) / np.sqrt(draws)
        return (mean, se) if return_error else mean
    if post.n == 0:
        return (post.xi.copy(), np.zeros(post.p)) if return_error else post.xi.copy()
    log_eta, eta_err = _eta_log(post.gamma, post.gamma_mat, accuracy, seed)
    ratio = np.exp(log_eta - fit.log_evidence)
    # Omega D' s^{-1} = omega Delta_post
    weights = post.omega[:, None] * post.delta
    mean = post.xi + weights @ ratio
    if not return_error:
        return mean
    rel = np.sqrt(eta_err**2 + fit.evidence_rel_error**2)
    err = np.sqrt((np.abs(weights) ** 2) @ (ratio * rel) ** 2)
    return mean, err


def _predict_log(fit, x_new, label, accuracy, seed):
    x_new = np.asarray(x_new, dtype=float).reshape(-1)
    if x_new.size != fit.posterior.p:
        raise DimensionMismatch(f"x_new must have length {fit.posterior.p}")
    if label not in (0, 1):
        raise NonBinaryResponse("label must be 0 or 1")
    d_new = x_new if label == 1 else -x_new
    post = fit.posterior
    if fit.prior_kind == "gaussian":
        # Phi_{n+1}(s_new^{-1} D_new xi; ...) / Phi_n(s^{-1} D xi; ...) with d_new appended
        D_new = np.vstack([fit.D, d_new])
        _, M, s = _likelihood_blocks(D_new, post.xi, post.omega_mat)
        cov = M / np.outer(s, s)
        np.fill_diagonal(cov, 1.0)
        num, rel_num = _orthant((D_new @ post.xi) / s, cov, accuracy, seed)
        den, rel_den = fit.log_evidence, fit.evidence_rel_error
    else:
        step = fit_sun_prior(BinaryDataset([1], d_new[None, :]), post, accuracy, seed)
        return step.log_evidence, step.evidence_rel_error
    return num - den, float(np.hypot(rel_num, rel_den))


def predict_prob(fit, x_new, label=1, accuracy=None, seed=None, return_error=False):
    """Posterior predictive probability ``pr(y_new = label | y)``.

    Computed in log space as a ratio of orthant probabilities and clamped
    to ``[0, 1]``. For a SUN-prior fit the same ratio is the evidence of a
    one-observation update of the posterior.

    Examples
    --------
    >>> fit = fit_gaussian_prior(BinaryDataset([1], [[1.0]]), 0.0, 1.0)
    >>> predict_prob(fit, [0.0])
    0.5
    """
    accuracy = fit.accuracy if accuracy is None else accuracy
    seed = fit.seed if seed is None else seed
    log_p, rel = _predict_log(fit, x_new, label, accuracy, seed)
    if rel > PREDICT_WARN_ERROR:
        warnings.warn(
            f"predictive probability has relative error {rel:.1e}", RuntimeWarning, stacklevel=2
        )
    prob = float(min(1.0, max(0.0, np.exp(log_p))))
    return (prob, rel) if return_error else prob


def _model_fit(model, data, accuracy, seed):
    if max(model.columns) >= data.p or min(model.columns) < 0:
        raise IndexOutOfRange(f"model columns must lie in [0, {data.p})")
    sub = data.columns(list(model.columns))
    return fit_gaussian_prior(sub, model.xi, model.omega_mat, accuracy, seed)


def log_marginal_likelihood(model, data, accuracy=DEFAULT_ACCURACY, seed=0, return_error=False):
    """``log pr(y | X, M)`` for a model using a subset of the columns.

    Equal to ``log Phi_n(s^{-1} D xi; s^{-1}(D Omega D' + I) s^{-1})``
    built on the model's columns and prior.
    """
    fit = _model_fit(model, data, accuracy, seed)
    if return_error:
        return fit.log_evidence, fit.evidence_rel_error
    return fit.log_evidence


def model_posterior(models, data, accuracy=DEFAULT_ACCURACY, seed=0):
    """Posterior model probabilities and pairwise log Bayes factors.

    Prior probabilities must sum to one; a single model or a list whose
    priors were all left at the default is given uniform prior weight.
    """
    models = list(models)
    if not models:
        raise EmptyModelSet("at least one model is required")
    priors = np.array([m.prior_prob for m in models], dtype=float)
    if np.all(priors == 1.0):
        priors = np.full(len(models), 1.0 / len(models))
    if abs(priors.sum() - 1.0) > 1e-12:
        raise ValueError(f"model prior probabilities sum to {priors.sum()!r}, not 1")
    logml = np.empty(len(models))
    errs = np.empty(len(models))
    for k, m in enumerate(models):
        logml[k], errs[k] = log_marginal_likelihood(m, data, accuracy, seed, return_error=True)
    with np.errstate(divide="ignore"):
        logpost = np.log(priors) + logml
    probs = np.exp(logpost - logsumexp(logpost))
    bf = logml[:, None] - logml[None, :]
    names = [m.name or f"model_{k}" for k, m in enumerate(models)]
    return ModelPosterior(probs, logml, bf, errs, names)


def sample_posterior(fit, count, seed=None):
    """Independent exact draws from the posterior.

    For a Gaussian prior, with ``M = D Omega D' + I``:

    1. ``V0 ~ N_p(0, Omega_bar - Omega_bar omega D' M^{-1} D omega Omega_bar)``
    2. ``V1`` from ``N_n(0, s^{-1} M s^{-1})`` truncated below ``-s^{-1} D xi``
    3. ``beta = xi + omega (V0 + Omega_bar omega D' M^{-1} s V1)``

    Only ``n x n`` systems are solved. SUN-prior fits are sampled through
    the additive representation of the posterior.
    """
    if fit.prior_kind != "gaussian" or fit.posterior.n == 0:
        return sun_sample(fit.posterior, count, seed)
    start = time.perf_counter()
    post = fit.posterior
    ss = seed_sequence(seed)
    ss0, ss1 = ss.spawn(2)
    OD, M, s = _likelihood_blocks(fit.D, post.xi, post.omega_mat)
    omega, obar = correlation_decompose(post.omega_mat)
    # Omega_bar omega D' = omega^{-1} Omega D'
    B = OD / omega[:, None]
    MB = solve_spd(M, B.T)
    v0_cov = obar - B @ MB
    v0 = sample_mvn(0.5 * (v0_cov + v0_cov.T), count, np.random.default_rng(ss0))
    batch = sample_tmvn(TruncNormSpec(post.gamma_mat, -post.gamma), count, ss1)
    v1 = batch.draws * s
    draws = post.xi + omega * (v0 + v1 @ MB)
    return SunSampleBatch(draws, seed, time.perf_counter() - start, batch.acceptance_rate)


def credible_interval(fit, j, level=0.95, draws=None, count=20_000, seed=None):
    """Equal-tailed interval for coefficient ``j`` from posterior draws.

    ``draws`` may be supplied (an ``(R, p)`` array) to reuse a sample;
    otherwise ``count`` draws are generated with ``seed``. ``level = 1``
    gives the sample range.
    """
    p = fit.posterior.p
    if not 0 <= j < p:
        raise IndexOutOfRange(f"coordinate {j} outside [0, {p})")
    if not 0 < level <= 1:
        raise ValueError("level must lie in (0, 1]")
    if draws is None:
        draws = sample_posterior(fit, count, fit.seed if seed is None else seed).draws
    col = np.asarray(draws)[:, j]
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(col, [tail, 1.0 - tail])
    return float(lo), float(hi)


def prior_predictive_prob(x_new, xi, Omega):
    """``Phi(x' xi / sqrt(x' Omega x + 1))``, the no-data predictive."""
    x_new = np.asarray(x_new, dtype=float)
    xi, Omega = _check_prior(xi, Omega, x_new.size)
    return float(np.exp(log_ndtr(x_new @ xi / np.sqrt(x_new @ Omega @ x_new + 1.0))))
