import numpy as np
import pytest

from netadjust.design import TreatmentVector, bernoulli_assign
from netadjust.errors import (
    DegenerateArmError,
    InvalidParameterError,
    NumericalError,
)
from netadjust.estimators import ols_fit
from netadjust.features import (
    FeatureRecipe,
    build_features,
    counterfactual_means,
)
from netadjust.graph import Graph
from netadjust.inference import (
    AsymptoticInputs,
    GammaEstimate,
    asymptotic_variance,
    bootstrap_variance,
    confidence_interval,
    mc_gamma,
    neyman_variance,
    plugin_variance,
    residual_variance,
)
from netadjust.predictors import OLSRegressor

from conftest import random_graph

FRAC1 = FeatureRecipe("frac_treated", 1)


def _empty_graph(n: int) -> Graph:
    return Graph(n, np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int64))


class TestMcGamma:
    def test_intercept_only_matches_truncated_inverse_moment(self):
        """With no features the arm Gram is the unit count, so Gamma_1 is a
        Monte-Carlo estimate of E[1/N1 | N1 >= 1].  At n=4, pi=1/2 that
        expectation is (1/15) * sum_k C(4,k)/k = 103/180 = 0.57222."""
        est = mc_gamma(_empty_graph(4), (), pi=0.5, B=4000, seed=99)
        assert est.gamma1[0, 0] == pytest.approx(103.0 / 180.0, abs=0.012)
        assert est.singular_skips > 0  # empty arms do occur at n=4

    def test_large_n_approaches_inverse_expected_count(self):
        est = mc_gamma(_empty_graph(2000), (), pi=0.5, B=200, seed=3)
        assert est.gamma1[0, 0] == pytest.approx(1.0 / 1000.0, rel=0.02)
        assert est.gamma0[0, 0] == pytest.approx(1.0 / 1000.0, rel=0.02)
        assert est.singular_skips == 0

    def test_determinism(self, small_world):
        a = mc_gamma(small_world, (FRAC1,), pi=0.5, B=20, seed=7)
        b = mc_gamma(small_world, (FRAC1,), pi=0.5, B=20, seed=7)
        assert np.array_equal(a.gamma0, b.gamma0)
        assert np.array_equal(a.gamma1, b.gamma1)

    def test_symmetric_positive_definite(self, small_world):
        est = mc_gamma(small_world, (FRAC1,), pi=0.5, B=30, seed=11)
        for g in (est.gamma0, est.gamma1):
            assert np.allclose(g, g.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(g) > 0)

    def test_invalid_b(self, small_world):
        with pytest.raises(InvalidParameterError):
            mc_gamma(small_world, (), pi=0.5, B=0, seed=0)


class TestResidualVariance:
    def test_exact_fit_gives_zero(self):
        g = random_graph(100, 0.05, seed=1)
        w = bernoulli_assign(g.n, 0.5, 2)
        x = build_features(g, (FRAC1,), w)
        y = 2.0 + 3.0 * x.values[:, 0] + w.w
        fit = ols_fit(x, w, y)
        assert residual_variance(x, w, y, fit) == pytest.approx(0.0, abs=1e-16)

    def test_mean_square_over_all_units(self):
        g = random_graph(200, 0.05, seed=3)
        w = bernoulli_assign(g.n, 0.5, 4)
        x = build_features(g, (FRAC1,), w)
        y = np.random.default_rng(5).normal(size=g.n)
        fit = ols_fit(x, w, y)
        resid = y - fit.fitted
        assert residual_variance(x, w, y, fit) == pytest.approx(np.mean(resid**2))


class TestPluginVariance:
    def _gamma(self, v0, v1):
        g0 = np.array([[v0]])
        g1 = np.array([[v1]])
        return GammaEstimate(g0, g1, g0, g1, B=1, singular_skips=0)

    def test_scalar_hand_value(self):
        om = counterfactual_means(_empty_graph(4), ())
        assert plugin_variance(2.0, om, self._gamma(0.25, 0.5)) == pytest.approx(1.5)

    def test_monotone_in_sigma2(self):
        om = counterfactual_means(_empty_graph(4), ())
        gam = self._gamma(0.3, 0.3)
        assert plugin_variance(2.0, om, gam) > plugin_variance(1.0, om, gam)

    def test_clamped_at_zero(self):
        om = counterfactual_means(_empty_graph(4), ())
        assert plugin_variance(1.0, om, self._gamma(-1.0, 0.0)) == 0.0


class TestNeymanVariance:
    def test_hand_value(self):
        w = TreatmentVector(np.array([0, 0, 1, 1]), 0.5)
        y = np.array([0.0, 2.0, 0.0, 2.0])  # per-arm sample variance 2
        assert neyman_variance(w, y) == pytest.approx(2.0)

    def test_degenerate_arm(self):
        w = TreatmentVector(np.array([0, 1, 1, 1]), 0.5)
        with pytest.raises(DegenerateArmError):
            neyman_variance(w, np.zeros(4))


class TestAsymptoticVariance:
    def test_omegas_at_feature_mean_leave_only_base_term(self):
        inp = AsymptoticInputs(
            sigma2=1.5, pi=0.5,
            omega0=np.array([2.0]), omega1=np.array([2.0]),
            mu_x=np.array([2.0]), sigma_x=np.array([[3.0]]),
        )
        assert asymptotic_variance(inp) == pytest.approx(1.5 * 4.0)

    def test_scalar_hand_value(self):
        # 1 * (4 + 0 + 2/0.5) = 8
        inp = AsymptoticInputs(
            sigma2=1.0, pi=0.5,
            omega0=np.array([0.0]), omega1=np.array([np.sqrt(2.0)]),
            mu_x=np.array([0.0]), sigma_x=np.array([[1.0]]),
        )
        assert asymptotic_variance(inp) == pytest.approx(8.0)

    def test_zero_noise_gives_zero(self):
        inp = AsymptoticInputs(
            sigma2=0.0, pi=0.3,
            omega0=np.array([1.0]), omega1=np.array([2.0]),
            mu_x=np.array([0.5]), sigma_x=np.array([[1.0]]),
        )
        assert asymptotic_variance(inp) == 0.0

    def test_singular_feature_covariance(self):
        inp = AsymptoticInputs(
            sigma2=1.0, pi=0.5,
            omega0=np.zeros(2), omega1=np.zeros(2),
            mu_x=np.zeros(2), sigma_x=np.ones((2, 2)),
        )
        with pytest.raises(NumericalError):
            asymptotic_variance(inp)


class TestConfidenceInterval:
    def test_gaussian_90(self):
        lo, hi = confidence_interval(0.0, 1.0, 0.90)
        assert hi == pytest.approx(1.6449, abs=1e-4)
        assert lo == pytest.approx(-hi)

    def test_zero_se_collapses(self):
        assert confidence_interval(2.5, 0.0, 0.95) == (2.5, 2.5)

    def test_percentile_quantiles(self):
        draws = np.arange(101.0)
        lo, hi = confidence_interval(50.0, 1.0, 0.90, "percentile", draws)
        assert lo == pytest.approx(5.0)
        assert hi == pytest.approx(95.0)

    def test_errors(self):
        with pytest.raises(InvalidParameterError):
            confidence_interval(0.0, 1.0, 1.5)
        with pytest.raises(InvalidParameterError):
            confidence_interval(0.0, 1.0, 0.9, "percentile", None)
        with pytest.raises(InvalidParameterError):
            confidence_interval(0.0, 1.0, 0.9, "bc_a")


class TestBootstrap:
    def _setup(self, seed=0, n=120, noise=1.0):
        g = random_graph(n, 0.05, seed=seed)
        w = bernoulli_assign(n, 0.5, seed + 1)
        x = build_features(g, (FRAC1,), w)
        rng = np.random.default_rng(seed + 2)
        y = 1.0 + w.w + 0.5 * x.values[:, 0] + noise * rng.normal(size=n)
        return g, w, y

    def test_determinism(self):
        g, w, y = self._setup()
        a = bootstrap_variance(g, (FRAC1,), OLSRegressor(), 1, w, y, B=10, seed=5)
        b = bootstrap_variance(g, (FRAC1,), OLSRegressor(), 1, w, y, B=10, seed=5)
        assert a.se == b.se
        assert np.array_equal(a.draws, b.draws)

    def test_zero_residuals_give_zero_se(self):
        g, w, y = self._setup(seed=3, noise=0.0)
        res = bootstrap_variance(g, (FRAC1,), OLSRegressor(), 1, w, y, B=10, seed=5)
        assert res.se == pytest.approx(0.0, abs=1e-9)

    def test_draws_center_near_point_estimate(self):
        g, w, y = self._setup(seed=7)
        res = bootstrap_variance(g, (FRAC1,), OLSRegressor(), 1, w, y, B=60, seed=9)
        boot_se_of_mean = res.se / np.sqrt(len(res.draws))
        assert abs(res.draws.mean() - res.tau_hat) < 4 * boot_se_of_mean + 0.05

    def test_percentile_interval_brackets_draws(self):
        g, w, y = self._setup(seed=11)
        res = bootstrap_variance(
            g, (FRAC1,), OLSRegressor(), 1, w, y, B=40, seed=13,
            interval="percentile", level=0.8,
        )
        inside = np.mean((res.draws >= res.ci[0]) & (res.draws <= res.ci[1]))
        assert inside >= 0.75

    def test_b_too_small(self):
        g, w, y = self._setup(seed=15)
        with pytest.raises(InvalidParameterError):
            bootstrap_variance(g, (FRAC1,), OLSRegressor(), 1, w, y, B=1, seed=0)
