import numpy as np
import pytest
from scipy import stats

from sunprobit.univariate import (
    log_interval_prob,
    log_phi,
    sample_trunc_norm,
    trunc_norm_cdf,
    trunc_norm_mean,
    trunc_norm_ppf,
)


class TestIntervalProb:
    @pytest.mark.parametrize(
        "a,b", [(-1.0, 1.0), (-np.inf, 0.0), (0.0, np.inf), (2.0, 3.0), (-3.0, -2.0), (-0.5, 4.0)]
    )
    def test_matches_scipy(self, a, b):
        ref = np.log(stats.norm.cdf(b) - stats.norm.cdf(a))
        assert log_interval_prob(a, b) == pytest.approx(ref, rel=1e-12)

    def test_far_tail_keeps_precision(self):
        # log(Phi(-40) - Phi(-41)) ~ log Phi(-40) since the gap is tiny in relative terms
        assert log_interval_prob(40.0, 41.0) == pytest.approx(stats.norm.logsf(40.0), rel=1e-10)
        assert log_interval_prob(-41.0, -40.0) == pytest.approx(stats.norm.logcdf(-40.0), rel=1e-10)

    def test_empty_interval(self):
        assert log_interval_prob(1.0, 1.0) == -np.inf

    def test_log_phi(self):
        np.testing.assert_allclose(log_phi([0.0, 1.5]), stats.norm.logpdf([0.0, 1.5]))


class TestTruncNorm:
    @pytest.mark.parametrize("a,b", [(-2.0, np.inf), (0.0, np.inf), (2.0, np.inf), (-1.0, 0.5), (-np.inf, -3.0)])
    def test_ppf_inverts_cdf(self, a, b):
        q = np.linspace(0.01, 0.99, 25)
        x = trunc_norm_ppf(q, a, b)
        np.testing.assert_allclose(trunc_norm_cdf(x, a, b), q, atol=1e-10)
        np.testing.assert_allclose(x, stats.truncnorm.ppf(q, a, b), atol=1e-8)

    def test_ppf_extreme_truncation(self):
        x = trunc_norm_ppf(np.array([1e-6, 0.5, 1 - 1e-6]), 30.0, np.inf)
        assert np.all(x >= 30.0) and np.all(np.isfinite(x))
        assert np.all(np.diff(x) > 0)

    def test_mean(self):
        for a in (-2.0, 0.0, 2.0, 8.0):
            assert trunc_norm_mean(a, np.inf) == pytest.approx(stats.truncnorm.mean(a, np.inf), rel=1e-9)

    def test_sampler_bounds(self):
        z = sample_trunc_norm(np.full(1000, 1.0), np.full(1000, 1.5), np.random.default_rng(0))
        assert z.min() >= 1.0 and z.max() <= 1.5
