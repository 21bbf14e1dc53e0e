import warnings

import numpy as np
import pytest

from tcrisk.evt import StandardNormalNoise
from tcrisk.garch import (
    GarchParams,
    filter as garch_filter,
    fit_qmle,
    forecast_sigma_next,
    quasi_loglik,
    simulate,
)

TABLE_PARAMS = GarchParams(2e-7, 0.0451, 0.9531)
NOISE = StandardNormalNoise()


class TestGarchParams:
    def test_positivity_enforced(self):
        for bad in ((0.0, 0.1, 0.5), (1e-6, -0.1, 0.5), (1e-6, 0.1, 0.0)):
            with pytest.raises(ValueError):
                GarchParams(*bad)

    def test_nonstationary_warns_not_raises(self):
        with pytest.warns(UserWarning, match="covariance-stationary"):
            p = GarchParams(1e-6, 0.2, 0.85)
        assert not p.is_covariance_stationary

    def test_unconditional_variance(self):
        assert TABLE_PARAMS.unconditional_variance == pytest.approx(2e-7 / 0.0018)


class TestFilter:
    def test_zero_losses_no_feedback(self):
        path = garch_filter(np.zeros(3), GarchParams(1.0, 0.5, 1e-12), init=1.0)
        assert np.allclose(path.sigmas**2, [1.0, 1.0, 1.0])
        assert np.allclose(path.residuals, 0.0)

    def test_one_step_hand_recursion(self):
        path = garch_filter(np.array([1.0, 0.0]), GarchParams(1.0, 0.5, 0.25), init=1.0)
        assert path.sigmas[1] ** 2 == pytest.approx(1.75, abs=1e-15)

    def test_refilter_reproduces_simulated_path(self):
        s0 = TABLE_PARAMS.unconditional_variance
        losses, path = simulate(TABLE_PARAMS, NOISE, 10_000, seed=3, sigma0_sq=s0)
        refit = garch_filter(losses, TABLE_PARAMS, init=s0)
        assert np.max(np.abs(refit.sigmas - path.sigmas) / path.sigmas) < 1e-10

    def test_residual_roundtrip(self):
        s0 = TABLE_PARAMS.unconditional_variance
        losses, path = simulate(TABLE_PARAMS, NOISE, 5_000, seed=9, sigma0_sq=s0)
        refit = garch_filter(losses, TABLE_PARAMS, init=s0)
        denom = np.maximum(np.abs(path.residuals), 1e-12)
        assert np.max(np.abs(refit.residuals - path.residuals) / denom) < 1e-10

    def test_sigma_sq_floor(self):
        losses, _ = simulate(TABLE_PARAMS, NOISE, 2_000, seed=4, sigma0_sq=1e-4)
        path = garch_filter(losses, TABLE_PARAMS)
        assert np.all(path.sigmas**2 >= TABLE_PARAMS.a0)

    def test_empty_losses_rejected(self):
        with pytest.raises(ValueError):
            garch_filter(np.array([]), TABLE_PARAMS)


class TestSimulate:
    def test_single_step(self):
        losses, path = simulate(TABLE_PARAMS, NOISE, 1, seed=5, sigma0_sq=4.0)
        assert path.sigmas[0] == 2.0
        assert losses[0] == 2.0 * NOISE.sample(1, 5)[0]

    def test_same_seed_bit_identical(self):
        a = simulate(TABLE_PARAMS, NOISE, 1_000, seed=11, sigma0_sq=1e-4)
        b = simulate(TABLE_PARAMS, NOISE, 1_000, seed=11, sigma0_sq=1e-4)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1].sigmas, b[1].sigmas)

    def test_sample_variance_near_unconditional(self):
        # Monte Carlo vs the closed-form a0/(1-a1-b); the process is highly
        # persistent so the 10% band needs a long path and a fixed stream
        uv = TABLE_PARAMS.unconditional_variance
        losses, _ = simulate(TABLE_PARAMS, NOISE, 100_000, seed=8, sigma0_sq=uv)
        assert abs(losses.var() / uv - 1.0) < 0.10

    def test_bad_args(self):
        with pytest.raises(ValueError):
            simulate(TABLE_PARAMS, NOISE, 0, seed=0, sigma0_sq=1.0)
        with pytest.raises(ValueError):
            simulate(TABLE_PARAMS, NOISE, 10, seed=0, sigma0_sq=0.0)


class TestForecast:
    def test_hand_recursion(self):
        val = forecast_sigma_next(np.array([0.0]), GarchParams(1.0, 0.5, 0.25), init=1.0)
        assert val == pytest.approx(np.sqrt(1.25), abs=1e-15)

    def test_matches_simulator_internal_next_step(self):
        s0 = TABLE_PARAMS.unconditional_variance
        losses, path = simulate(TABLE_PARAMS, NOISE, 500, seed=13, sigma0_sq=s0)
        expected = np.sqrt(
            TABLE_PARAMS.a0
            + TABLE_PARAMS.a1 * losses[-1] ** 2
            + TABLE_PARAMS.b * path.sigmas[-1] ** 2
        )
        got = forecast_sigma_next(losses, TABLE_PARAMS, init=s0)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_calm_stretch_fixed_point(self):
        # with zero losses the recursion contracts to sqrt(a0 / (1 - b))
        got = forecast_sigma_next(np.zeros(5_000), TABLE_PARAMS, init=1e-6)
        assert got == pytest.approx(np.sqrt(2e-7 / (1 - 0.9531)), rel=1e-10)


class TestFitQmle:
    @pytest.fixture(scope="class")
    def recovery_fit(self):
        losses, _ = simulate(
            TABLE_PARAMS, NOISE, 20_000, seed=3,
            sigma0_sq=TABLE_PARAMS.unconditional_variance,
        )
        return losses, fit_qmle(losses)

    def test_recovers_truth_within_3_stderr(self, recovery_fit):
        _, fit = recovery_fit
        assert fit.converged
        truth = np.array([2e-7, 0.0451, 0.9531])
        est = np.array([fit.params.a0, fit.params.a1, fit.params.b])
        se = np.array(fit.stderrs)
        assert np.all(se > 0.0)
        assert np.all(np.abs(est - truth) < 3.0 * se)

    def test_loglik_not_below_generating_params(self, recovery_fit):
        losses, fit = recovery_fit
        at_truth = quasi_loglik(losses, TABLE_PARAMS)
        assert fit.loglik >= at_truth - 1e-6

    def test_local_maximality_probe(self, recovery_fit):
        losses, fit = recovery_fit
        rng = np.random.default_rng(17)
        base = np.array([fit.params.a0, fit.params.a1, fit.params.b])
        for _ in range(100):
            jitter = 1.0 + rng.uniform(-0.05, 0.05, size=3)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                perturbed = GarchParams(*(base * jitter))
                ll = quasi_loglik(losses, perturbed)
            assert fit.loglik >= ll - 1e-9

    def test_simulated_magnitudes_in_daily_equity_range(self):
        losses, _ = simulate(
            TABLE_PARAMS, NOISE, 7_400, seed=21,
            sigma0_sq=TABLE_PARAMS.unconditional_variance,
        )
        fit = fit_qmle(losses)
        assert 1e-7 <= fit.params.a0 <= 1e-6
        assert 0.03 <= fit.params.a1 <= 0.08
        assert 0.90 <= fit.params.b <= 0.97

    def test_short_series_warns(self):
        losses, _ = simulate(TABLE_PARAMS, NOISE, 300, seed=2, sigma0_sq=1e-4)
        with pytest.warns(UserWarning, match="QMLE may be unreliable"):
            fit_qmle(losses)

    def test_constant_series_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            fit_qmle(np.zeros(1000))

    def test_json_surface(self, recovery_fit):
        _, fit = recovery_fit
        d = fit.to_json_dict()
        assert set(d) >= {"a0", "a1", "b", "stderrs", "loglik", "init_rule", "n_obs"}
        assert d["n_obs"] == 20_000
