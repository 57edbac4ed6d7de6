import itertools

import numpy as np
import pytest
from scipy import stats

from sunprobit.errors import DimensionMismatch, EmptyModelSet, IndexOutOfRange, NonBinaryResponse
from sunprobit.probit import (
    BinaryDataset,
    ModelSpec,
    credible_interval,
    fit_gaussian_prior,
    fit_sun_prior,
    log_marginal_likelihood,
    model_posterior,
    posterior_mean,
    predict_prob,
    prior_predictive_prob,
    sample_posterior,
)
from sunprobit.sun import SunParams, sun_log_density

SQRT_1_PI = np.sqrt(1 / np.pi)
ONE_OBS = BinaryDataset([1], [[1.0]])


def instance(oracles, k):
    o = oracles["probit_instances"][k]
    data = BinaryDataset(o["y"], o["X"])
    return o, data, fit_gaussian_prior(data, o["xi"], o["Omega"], accuracy=1e-5)


def simulate(rng, n, p, scale=1.0):
    X = rng.normal(size=(n, p))
    beta = rng.normal(scale=scale, size=p)
    y = (X @ beta + rng.normal(size=n) > 0).astype(int)
    return BinaryDataset(y, X)


class TestDataset:
    def test_D(self):
        d = BinaryDataset([1, 0], [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(d.D, [[1.0, 2.0], [-3.0, -4.0]])

    def test_non_binary(self):
        with pytest.raises(NonBinaryResponse):
            BinaryDataset([1, 2], [[1.0], [2.0]])

    def test_row_mismatch(self):
        with pytest.raises(DimensionMismatch):
            BinaryDataset([1, 0], [[1.0]])

    def test_empty(self):
        d = BinaryDataset([], np.zeros((0, 2)))
        assert (d.n, d.p) == (0, 2)

    def test_concat_and_columns(self):
        a = BinaryDataset([1], [[1.0, 2.0]], ["a", "b"])
        b = BinaryDataset([0], [[3.0, 4.0]])
        c = a.concat(b)
        assert c.n == 2 and c.feature_names == ("a", "b")
        assert c.columns([1]).feature_names == ("b",)


class TestFitGaussian:
    @pytest.mark.parametrize("y", [0, 1])
    @pytest.mark.parametrize("x", [-3.0, -1.5, 0.0, 1.5, 3.0])
    def test_single_observation(self, x, y):
        fit = fit_gaussian_prior(BinaryDataset([y], [[x]]), 0.0, 1.0)
        assert fit.posterior.delta[0, 0] == pytest.approx((2 * y - 1) * x / np.sqrt(x * x + 1), abs=1e-14)
        assert fit.posterior.gamma[0] == 0.0
        assert fit.posterior.gamma_mat[0, 0] == 1.0
        assert fit.log_evidence == pytest.approx(np.log(0.5), abs=1e-14)

    def test_two_predictors(self):
        fit = fit_gaussian_prior(BinaryDataset([0], [[1.0, 1.0]]), 0.0, np.eye(2))
        np.testing.assert_array_equal(fit.D, [[-1.0, -1.0]])
        assert fit.s[0] == pytest.approx(np.sqrt(3))
        np.testing.assert_allclose(fit.posterior.delta[:, 0], -1 / np.sqrt(3), atol=1e-15)
        # density against the grid Bayes rule phi_2(b) Phi(-b1 - b2) / 0.5
        b = np.random.default_rng(0).normal(size=(20, 2))
        ref = stats.multivariate_normal(np.zeros(2), np.eye(2)).logpdf(b) + stats.norm.logcdf(-b.sum(1)) - np.log(0.5)
        np.testing.assert_allclose(sun_log_density(fit.posterior, b), ref, atol=1e-9)

    def test_dimension_check(self):
        with pytest.raises(DimensionMismatch):
            fit_gaussian_prior(ONE_OBS, 0.0, np.eye(2))

    def test_evidence_matches_quadrature(self, oracles):
        for k in range(len(oracles["probit_instances"])):
            o, _, fit = instance(oracles, k)
            assert fit.log_evidence == pytest.approx(o["quadrature"]["log_evidence"], abs=1e-3)


class TestInvariants:
    def test_label_symmetry(self):
        data = simulate(np.random.default_rng(11), 6, 3)
        flipped = BinaryDataset(1 - data.y, -data.X)
        a = fit_gaussian_prior(data, 0.2, 2.0)
        b = fit_gaussian_prior(flipped, 0.2, 2.0)
        for attr in ("delta", "gamma", "gamma_mat"):
            np.testing.assert_array_equal(getattr(a.posterior, attr), getattr(b.posterior, attr))
        assert a.log_evidence == b.log_evidence

    def test_prior_recovery(self):
        data = simulate(np.random.default_rng(12), 5, 2)
        xi = np.array([0.4, -0.3])
        fit = fit_gaussian_prior(data, xi, 1e-6 * np.eye(2))
        np.testing.assert_allclose(posterior_mean(fit), xi, atol=1e-4)

    def test_evidence_coherence(self):
        data = simulate(np.random.default_rng(13), 6, 2)
        fit = fit_gaussian_prior(data, 0.1, 3.0, seed=4)
        lml = log_marginal_likelihood(ModelSpec([0, 1], 0.1, 3.0), data, seed=4)
        assert lml == pytest.approx(fit.log_evidence, rel=1e-12)


class TestFitSun:
    def test_gaussian_prior_reduction(self):
        data = BinaryDataset([1, 0], [[1.0, 0.5], [-0.3, 2.0]])
        a = fit_gaussian_prior(data, [0.1, 0.2], np.eye(2))
        b = fit_sun_prior(data, SunParams.gaussian([0.1, 0.2], np.eye(2)))
        np.testing.assert_array_equal(a.posterior.delta, b.posterior.delta)
        assert a.log_evidence == b.log_evidence

    def test_empty_batch(self):
        prior = fit_gaussian_prior(ONE_OBS, 0.0, 1.0).posterior
        fit = fit_sun_prior(BinaryDataset([], np.zeros((0, 1))), prior)
        assert fit.posterior is prior
        assert fit.log_evidence == 0.0

    @pytest.mark.filterwarnings("ignore::sunprobit.errors.BudgetExceeded")
    def test_sequential_equals_pooled(self):
        rng = np.random.default_rng(3)
        data = simulate(rng, 5, 2)
        first = BinaryDataset(data.y[:2], data.X[:2])
        second = BinaryDataset(data.y[2:], data.X[2:])
        xi, Om = np.array([0.2, -0.1]), np.array([[2.0, 0.3], [0.3, 1.0]])
        pooled = fit_gaussian_prior(data, xi, Om, accuracy=1e-5)
        step = fit_sun_prior(second, fit_gaussian_prior(first, xi, Om).posterior, accuracy=1e-5)
        for attr in ("delta", "gamma", "gamma_mat"):
            np.testing.assert_allclose(getattr(step.posterior, attr), getattr(pooled.posterior, attr), atol=1e-14)
        ev_first = fit_gaussian_prior(first, xi, Om, accuracy=1e-5).log_evidence
        assert ev_first + step.log_evidence == pytest.approx(pooled.log_evidence, abs=1e-4)

    def test_dimension_check(self):
        with pytest.raises(DimensionMismatch):
            fit_sun_prior(BinaryDataset([1], [[1.0, 2.0]]), SunParams.gaussian([0.0], [[1.0]]))


class TestPosteriorMean:
    def test_single_observation(self):
        assert posterior_mean(fit_gaussian_prior(ONE_OBS, 0.0, 1.0)) == pytest.approx(SQRT_1_PI, abs=1e-12)

    def test_uninformative_covariate(self):
        fit = fit_gaussian_prior(BinaryDataset([1, 0], [[0.0], [0.0]]), 0.7, 2.0)
        assert posterior_mean(fit) == pytest.approx(0.7, abs=1e-12)

    def test_against_quadrature(self, oracles):
        for k in range(len(oracles["probit_instances"])):
            o, _, fit = instance(oracles, k)
            np.testing.assert_allclose(posterior_mean(fit), o["quadrature"]["mean"], atol=1e-3)

    def test_against_sampling(self, oracles):
        o, _, fit = instance(oracles, 3)
        draws = sample_posterior(fit, 200_000, seed=1).draws
        se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(posterior_mean(fit) - draws.mean(axis=0)) < 3 * se + 1e-4)

    def test_sun_prior_route(self):
        prior = fit_gaussian_prior(ONE_OBS, 0.0, 1.0).posterior
        fit = fit_sun_prior(BinaryDataset([], np.zeros((0, 1))), prior)
        mean, se = posterior_mean(fit, return_error=True, seed=2)
        assert abs(mean[0] - SQRT_1_PI) < 4 * se[0]


class TestPredict:
    def test_zero_covariate(self, oracles):
        _, _, fit = instance(oracles, 4)
        assert predict_prob(fit, np.zeros(fit.posterior.p)) == pytest.approx(0.5, abs=1e-6)

    def test_prior_predictive(self):
        fit = fit_gaussian_prior(BinaryDataset([], np.zeros((0, 2))), [0.5, -0.2], np.diag([2.0, 1.0]))
        x = np.array([1.0, 3.0])
        ref = prior_predictive_prob(x, [0.5, -0.2], np.diag([2.0, 1.0]))
        assert predict_prob(fit, x) == pytest.approx(ref, abs=1e-12)
        assert prior_predictive_prob(x, 0.0, 1.0) == 0.5

    def test_prior_predictive_by_quadrature(self):
        t, w = np.polynomial.legendre.leggauss(400)
        b = 0.3 + 10 * 1.5 * t
        ref = 10 * 1.5 * np.sum(w * stats.norm.pdf(b, 0.3, 1.5) * stats.norm.cdf(0.8 * b))
        assert prior_predictive_prob([0.8], 0.3, 2.25) == pytest.approx(ref, abs=1e-10)

    def test_labels_sum_to_one(self, oracles):
        _, _, fit = instance(oracles, 2)
        x = np.linspace(-1, 1, fit.posterior.p)
        assert predict_prob(fit, x, 1) + predict_prob(fit, x, 0) == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.filterwarnings("ignore::sunprobit.errors.BudgetExceeded")
    def test_against_quadrature(self, oracles):
        for k in range(len(oracles["probit_instances"])):
            o, _, fit = instance(oracles, k)
            assert predict_prob(fit, o["x_new"]) == pytest.approx(o["quadrature"]["predict"], abs=5e-4)

    def test_single_observation_against_sampling(self):
        fit = fit_gaussian_prior(ONE_OBS, 0.0, 1.0)
        vals = stats.norm.cdf(sample_posterior(fit, 1_000_000, seed=4).draws[:, 0])
        assert abs(predict_prob(fit, [1.0]) - vals.mean()) < 3 * vals.std() / 1e3

    def test_sun_prior_matches_gaussian(self):
        data = BinaryDataset([1, 0], [[1.0, 0.5], [-0.3, 2.0]])
        g = fit_gaussian_prior(data, 0.0, 1.0, accuracy=1e-5)
        s = fit_sun_prior(BinaryDataset([], np.zeros((0, 2))), g.posterior, accuracy=1e-5)
        x = np.array([0.4, -1.0])
        assert predict_prob(s, x) == pytest.approx(predict_prob(g, x), abs=1e-4)

    def test_bad_label(self):
        with pytest.raises(NonBinaryResponse):
            predict_prob(fit_gaussian_prior(ONE_OBS, 0.0, 1.0), [1.0], label=2)


class TestMarginalLikelihood:
    def test_single_observation(self):
        m = ModelSpec([0], 0.0, 7.0)
        assert log_marginal_likelihood(m, BinaryDataset([0], [[2.0]])) == pytest.approx(np.log(0.5), abs=1e-14)

    def test_two_observations_arcsine(self):
        X = np.array([[1.0, 0.5], [-0.4, 2.0]])
        Om = np.array([[1.5, 0.2], [0.2, 0.7]])
        data = BinaryDataset([1, 1], X)
        d1, d2 = X
        s1, s2 = np.sqrt(d1 @ Om @ d1 + 1), np.sqrt(d2 @ Om @ d2 + 1)
        rho = d1 @ Om @ d2 / (s1 * s2)
        ref = 0.25 + np.arcsin(rho) / (2 * np.pi)
        val = log_marginal_likelihood(ModelSpec([0, 1], 0.0, Om), data, accuracy=1e-6)
        assert np.exp(val) == pytest.approx(ref, abs=1e-5)

    def test_total_probability(self):
        X = np.random.default_rng(5).normal(size=(3, 2))
        model = ModelSpec([0, 1], [0.3, -0.5], np.eye(2))
        total = sum(
            np.exp(log_marginal_likelihood(model, BinaryDataset(y, X))) for y in itertools.product([0, 1], repeat=3)
        )
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            log_marginal_likelihood(ModelSpec([3], 0.0, 1.0), ONE_OBS)


class TestModelPosterior:
    def test_single(self):
        res = model_posterior([ModelSpec([0], 0.0, 1.0)], ONE_OBS)
        np.testing.assert_array_equal(res.probabilities, [1.0])

    def test_identical_models(self):
        data = BinaryDataset([1, 0, 1], [[1.0], [0.2], [-0.5]])
        res = model_posterior([ModelSpec([0], 0.0, 1.0), ModelSpec([0], 0.0, 1.0)], data)
        np.testing.assert_allclose(res.probabilities, [0.5, 0.5])
        assert res.log_bayes_factors[0, 1] == 0.0

    def test_empty(self):
        with pytest.raises(EmptyModelSet):
            model_posterior([], ONE_OBS)

    def test_priors_must_sum_to_one(self):
        with pytest.raises(ValueError):
            model_posterior([ModelSpec([0], 0.0, 1.0, 0.3), ModelSpec([0], 0.0, 1.0, 0.3)], ONE_OBS)

    @pytest.mark.slow
    @pytest.mark.filterwarnings("ignore::sunprobit.errors.BudgetExceeded")
    def test_true_covariate_preferred(self):
        wins = 0
        for rep in range(100):
            rng = np.random.default_rng(1000 + rep)
            X = rng.normal(size=(40, 2))
            y = (1.5 * X[:, 0] + rng.normal(size=40) > 0).astype(int)
            data = BinaryDataset(y, X)
            res = model_posterior([ModelSpec([0], 0.0, 4.0), ModelSpec([1], 0.0, 4.0)], data, accuracy=1e-3)
            wins += res.probabilities[0] > res.probabilities[1]
        assert wins >= 95


class TestSampling:
    def test_flat_likelihood_gives_prior(self):
        R = 100_000
        Om = np.array([[2.0, 0.4], [0.4, 1.0]])
        fit = fit_gaussian_prior(BinaryDataset([1, 0, 1], np.zeros((3, 2))), [1.0, -1.0], Om)
        draws = sample_posterior(fit, R, seed=0).draws
        assert np.all(np.abs(draws.mean(axis=0) - [1.0, -1.0]) < 3 * np.sqrt(np.diag(Om) / R))

    def test_single_observation(self):
        R = 100_000
        fit = fit_gaussian_prior(ONE_OBS, 0.0, 1.0)
        x = sample_posterior(fit, R, seed=1).draws[:, 0]
        assert abs(x.mean() - SQRT_1_PI) < 3 * x.std(ddof=1) / np.sqrt(R)
        # posterior is SN with alpha = 1: cdf 2 * owens-t form via scipy skewnorm
        assert stats.kstest(x, stats.skewnorm(1.0).cdf).pvalue > 0.01

    def test_single_observation_cdf_oracle(self, oracles):
        R = 100_000
        x = sample_posterior(fit_gaussian_prior(ONE_OBS, 0.0, 1.0), R, seed=3).draws[:, 0]
        for z, ref in oracles["single_obs_posterior_cdf"].items():
            emp = np.mean(x <= float(z))
            assert abs(emp - ref) < 3 * np.sqrt(ref * (1 - ref) / R) + 1e-12

    def test_two_predictor_mean(self):
        R = 100_000
        fit = fit_gaussian_prior(BinaryDataset([0], [[1.0, 1.0]]), 0.0, np.eye(2))
        draws = sample_posterior(fit, R, seed=2).draws
        se = draws.std(axis=0, ddof=1) / np.sqrt(R)
        assert np.all(np.abs(draws.mean(axis=0) - posterior_mean(fit)) < 3 * se)

    def test_deterministic(self):
        fit = fit_gaussian_prior(ONE_OBS, 0.0, 1.0)
        np.testing.assert_array_equal(sample_posterior(fit, 10, seed=5).draws, sample_posterior(fit, 10, seed=5).draws)


class TestCredibleInterval:
    def test_gaussian_quantiles(self):
        fit = fit_gaussian_prior(BinaryDataset([1], [[0.0, 0.0]]), [0.5, 0.0], np.diag([4.0, 1.0]))
        lo, hi = credible_interval(fit, 0, 0.95, count=200_000, seed=0)
        assert lo == pytest.approx(0.5 - 1.95996 * 2, abs=0.03)
        assert hi == pytest.approx(0.5 + 1.95996 * 2, abs=0.03)

    def test_full_level(self):
        fit = fit_gaussian_prior(ONE_OBS, 0.0, 1.0)
        draws = sample_posterior(fit, 100, seed=0).draws
        assert credible_interval(fit, 0, 1.0, draws=draws) == (draws.min(), draws.max())

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            credible_interval(fit_gaussian_prior(ONE_OBS, 0.0, 1.0), 1)
