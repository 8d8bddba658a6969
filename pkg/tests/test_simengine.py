import numpy as np
import pytest

from itsim.errors import InputError
from itsim.lagfit import fit_pre_policy
from itsim.linmodel import ModelSpec
from itsim.series import SyntheticSpec, TimeSeriesData, generate_synthetic
from itsim.simengine import ParamDraws, draw_params, replicate_rng, rho_diagnostics, simulate_trajectories


@pytest.fixture
def fit(trend_data):
    return fit_pre_policy(trend_data, ModelSpec())


class TestStreams:
    def test_replicate_streams_independent_of_order(self):
        a = replicate_rng(3, 7).standard_normal(4)
        replicate_rng(3, 6).standard_normal(100)
        b = replicate_rng(3, 7).standard_normal(4)
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, replicate_rng(3, 8).standard_normal(4))


class TestDrawParams:
    def test_fixed_parameters(self, fit):
        d = draw_params(fit, 20, seed=1, parameter_uncertainty=False)
        np.testing.assert_array_equal(d.beta_star, np.tile(fit.ols.coefficients, (20, 1)))
        np.testing.assert_array_equal(d.sigma_star, fit.sigma_tilde)

    def test_sigma_scaling_moments(self, fit):
        d = draw_params(fit, 40_000, seed=2)
        df = fit.ols.df_resid
        ratio2 = (d.sigma_star / fit.sigma_tilde) ** 2
        # df / chi2_df has mean df / (df - 2)
        assert ratio2.mean() == pytest.approx(df / (df - 2), rel=0.02)

    def test_beta_covariance(self, fit):
        d = draw_params(fit, 40_000, seed=3)
        df = fit.ols.df_resid
        cov = np.cov(d.beta_star.T)
        np.testing.assert_allclose(cov, fit.ols.vcov * df / (df - 2), rtol=0.05, atol=1e-6)

    def test_iteration(self, fit):
        d = draw_params(fit, 5, seed=4)
        assert len(d) == 5
        assert [p.beta_star[d.rho_index] for p in d] == list(d.rho_star)
        assert d[3].replicate_id == 3


class TestSimulate:
    def test_frozen_values(self, trend_data, fit):
        tr = simulate_trajectories(fit, trend_data, 50, seed=5)
        np.testing.assert_allclose(
            tr.trajectories[:2, :3],
            [[13.75906657, 12.78782849, 14.59441842], [13.76147459, 12.53978134, 12.37949477]],
            rtol=1e-8,
        )
        assert tr.anchor == (60, trend_data.outcome[59])
        assert list(tr.times) == list(range(61, 73))

    @pytest.mark.parametrize("threads", [2, 3, 8])
    def test_thread_count_invariant(self, trend_data, fit, threads):
        a = simulate_trajectories(fit, trend_data, 257, seed=9)
        b = simulate_trajectories(fit, trend_data, 257, seed=9, threads=threads)
        np.testing.assert_array_equal(a.trajectories, b.trajectories)

    def test_prefix_stable_in_R(self, trend_data, fit):
        a = simulate_trajectories(fit, trend_data, 10, seed=9)
        b = simulate_trajectories(fit, trend_data, 30, seed=9)
        np.testing.assert_array_equal(a.trajectories, b.trajectories[:10])

    def test_noise_free_fit_gives_deterministic_path(self):
        d = generate_synthetic(SyntheticSpec(beta0=1, beta1=0.5, sigma=0, n_pre=12, n_post=4))
        f = fit_pre_policy(d, ModelSpec())
        tr = simulate_trajectories(f, d, 20, seed=0)
        np.testing.assert_allclose(tr.trajectories, np.tile(1 + 0.5 * tr.times, (20, 1)), atol=1e-8)

    def test_horizon(self, trend_data, fit):
        tr = simulate_trajectories(fit, trend_data, 5, seed=1, horizon=64)
        assert tr.trajectories.shape == (5, 4)
        assert tr.full_series(trend_data).shape == (5, 64)
        with pytest.raises(InputError):
            simulate_trajectories(fit, trend_data, 5, seed=1, horizon=60)

    def test_missing_post_covariate(self, trend_data):
        x = np.random.default_rng(0).standard_normal(len(trend_data))
        x[65] = np.nan
        d = trend_data.with_covariates({"x": x})
        f = fit_pre_policy(d, ModelSpec.parse("intercept,trend,x"))
        with pytest.raises(InputError, match="66"):
            simulate_trajectories(f, d, 5, seed=1)

    def test_fixed_theta_variance_horizon_one(self, trend_data, fit):
        tr = simulate_trajectories(fit, trend_data, 20_000, seed=11, parameter_uncertainty=False)
        assert tr.trajectories[:, 0].var() == pytest.approx(fit.sigma_tilde**2, rel=0.05)


class TestRhoDiagnostics:
    def test_warns_when_many_explosive(self):
        rho = np.array([1.2] * 10 + [0.5] * 80 + [-0.1] * 10)
        draws = ParamDraws(rho[:, None], np.ones(100), ["lag_Y"], 0)
        with pytest.warns(RuntimeWarning, match="rho"):
            diag = rho_diagnostics(draws)
        assert diag.warn
        assert diag.frac_explosive == pytest.approx(0.1)
        assert diag.frac_negative == pytest.approx(0.1)

    def test_threshold(self, fit):
        draws = draw_params(fit, 500, seed=1)
        diag = rho_diagnostics(draws)
        assert diag.frac_explosive == 0.0 and not diag.warn
        assert 0 <= diag.frac_negative <= 1


def fixed_fit(coefs, sigma, names=("(Intercept)", "t", "lag_Y")):
    from itsim.lagfit import LaggedFit
    from itsim.linmodel import OlsFit

    k = len(coefs)
    return LaggedFit(OlsFit(np.array(coefs, dtype=float), np.zeros((k, k)), sigma, list(names), 40), ModelSpec())


class TestDocumentedExamples:
    def test_zero_vcov_keeps_beta(self, trend_data):
        d = draw_params(fixed_fit([1.0, 0.2, 0.3], 1.0), 200, seed=3)
        np.testing.assert_array_equal(d.beta_star, np.tile([1.0, 0.2, 0.3], (200, 1)))
        assert np.all(d.sigma_star > 0)

    def test_beta_mean_within_mcse(self, fit):
        d = draw_params(fit, 20_000, seed=4)
        mcse = np.sqrt(np.diag(np.cov(d.beta_star.T)) / 20_000)
        assert np.all(np.abs(d.beta_star.mean(axis=0) - fit.ols.coefficients) < 4 * mcse)

    def test_inverse_chi_square_moment_df30(self):
        f = fixed_fit([1.0, 0.0, 0.5], 2.0)
        f = type(f)(type(f.ols)(f.ols.coefficients, f.ols.vcov, 2.0, f.ols.column_names, 33), f.spec)
        assert f.ols.df_resid == 30
        d = draw_params(f, 100_000, seed=5)
        assert np.mean(d.sigma_star**2) == pytest.approx(4 * 30 / 28, rel=0.02)

    def test_noiseless_recursion_to_fixed_point(self):
        t = np.arange(1, 21)
        y = np.linspace(0, 4, 20)
        y[14] = 4.0
        data = TimeSeriesData(times=t, outcome=y, t0=15)
        tr = simulate_trajectories(fixed_fit([1.0, 0.0, 0.5], 0.0), data, 3, seed=0)
        np.testing.assert_allclose(tr.trajectories[0], [3, 2.5, 2.25, 2.125, 2.0625])

    def test_constant_rho_diagnostics(self):
        draws = ParamDraws(np.full((50, 1), 0.3), np.ones(50), ["lag_Y"], 0)
        diag = rho_diagnostics(draws)
        assert (diag.frac_explosive, diag.frac_negative, diag.warn) == (0.0, 0.0, False)

    def test_short_explosive_series_flags(self):
        rng = np.random.default_rng(6)
        rho = 0.95 + 0.2 * rng.standard_normal(2000)
        draws = ParamDraws(rho[:, None], np.ones(2000), ["lag_Y"], 0)
        with pytest.warns(RuntimeWarning):
            assert rho_diagnostics(draws).frac_explosive > 0.05

    def test_negative_rho_reported_without_warning(self):
        f = fixed_fit([1.0, 0.0, -0.2], 1.0)
        vcov = np.diag([0.01, 0.0, 0.04])
        f = type(f)(type(f.ols)(f.ols.coefficients, vcov, 1.0, f.ols.column_names, 40), f.spec)
        diag = rho_diagnostics(draw_params(f, 5000, seed=7))
        assert diag.frac_negative > 0.5 and not diag.warn
