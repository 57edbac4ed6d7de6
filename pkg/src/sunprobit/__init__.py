"""Exact Bayesian probit regression with unified skew-normal posteriors.

Gaussian orthant probabilities and truncated-normal sampling by minimax
exponential tilting, the SUN distribution family, conjugate probit updates
with closed-form evidence, prediction and posterior means, an exact i.i.d.
posterior sampler and a Gibbs baseline.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (
    BudgetExceeded,
    ConstantColumn,
    DimensionMismatch,
    EmptyModelSet,
    IndexOutOfRange,
    InfeasibleRegion,
    LowAcceptance,
    NonBinaryResponse,
    NotPositiveDefinite,
    ParseError,
    RankDeficient,
    TiltingFallback,
)
from .linalg import CholFactor, cholesky
from .mcmc import ChainSummary, compare_samplers, effective_sample_size, gibbs_albert_chib
from .orthant import OrthantEstimate, OrthantProblem, log_cdf_shared, phi_n, phi_n_batch
from .probit import (
    BinaryDataset,
    ModelPosterior,
    ModelSpec,
    PosteriorFit,
    credible_interval,
    fit_gaussian_prior,
    fit_sun_prior,
    log_marginal_likelihood,
    model_posterior,
    posterior_mean,
    predict_prob,
    sample_posterior,
)
from .sun import (
    SunParams,
    SunSampleBatch,
    sun_affine,
    sun_conditional,
    sun_log_density,
    sun_log_mgf,
    sun_marginal,
    sun_mean_mc,
    sun_sample,
)
from .tmvn import TruncNormSpec, TruncSampleBatch, sample_mvn, sample_tmvn

__all__ = [
    "BinaryDataset",
    "BudgetExceeded",
    "ChainSummary",
    "CholFactor",
    "ConstantColumn",
    "DimensionMismatch",
    "EmptyModelSet",
    "IndexOutOfRange",
    "InfeasibleRegion",
    "LowAcceptance",
    "ModelPosterior",
    "ModelSpec",
    "NonBinaryResponse",
    "NotPositiveDefinite",
    "OrthantEstimate",
    "OrthantProblem",
    "ParseError",
    "PosteriorFit",
    "RankDeficient",
    "SunParams",
    "SunSampleBatch",
    "TiltingFallback",
    "TruncNormSpec",
    "TruncSampleBatch",
    "cholesky",
    "compare_samplers",
    "credible_interval",
    "effective_sample_size",
    "fit_gaussian_prior",
    "fit_sun_prior",
    "gibbs_albert_chib",
    "log_cdf_shared",
    "log_marginal_likelihood",
    "model_posterior",
    "phi_n",
    "phi_n_batch",
    "posterior_mean",
    "predict_prob",
    "sample_mvn",
    "sample_posterior",
    "sample_tmvn",
    "sun_affine",
    "sun_conditional",
    "sun_log_density",
    "sun_log_mgf",
    "sun_marginal",
    "sun_mean_mc",
    "sun_sample",
]
