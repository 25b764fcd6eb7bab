import logging

import numpy as np
import numpy.testing as npt
import pytest
from scipy.stats import genpareto

from patchad.errors import ConfigError, DataError
from patchad.spot import (
    GPDFit,
    Spot,
    SpotState,
    fit_grimshaw,
    fit_moments,
    gpd_log_likelihood,
    spot_threshold,
)


@pytest.fixture(scope="module")
def calibration():
    return np.random.default_rng(1).exponential(size=100_000)


class TestGPD:
    @pytest.mark.parametrize("gamma, sigma", [(0.0, 1.5), (0.3, 2.0), (-0.2, 1.0)])
    def test_log_likelihood_matches_scipy(self, gamma, sigma, rng):
        excesses = rng.exponential(size=50)
        if gamma < 0:
            excesses = excesses[excesses < -sigma / gamma]

        expected = genpareto.logpdf(excesses, c=gamma, scale=sigma).sum()
        npt.assert_allclose(gpd_log_likelihood(excesses, gamma, sigma), expected)

    def test_outside_support(self):
        assert gpd_log_likelihood(np.array([1.0, 3.0]), -0.5, 1.0) == -np.inf

    def test_grimshaw_on_exponential(self, rng):
        excesses = rng.exponential(size=2000)
        gamma, sigma = fit_grimshaw(excesses)

        assert abs(gamma) < 0.1
        assert abs(sigma - 1.0) < 0.1
        assert gpd_log_likelihood(excesses, gamma, sigma) >= gpd_log_likelihood(
            excesses, 0.0, excesses.mean()
        )

    def test_grimshaw_keeps_a_bounded_tail(self):
        excesses = genpareto.rvs(c=-0.3, scale=1.0, size=2000, random_state=3)
        gamma, sigma = fit_grimshaw(excesses)

        assert abs(gamma + 0.3) < 0.1
        assert abs(sigma - 1.0) < 0.15

    def test_moments_on_exponential(self, rng):
        gamma, sigma = fit_moments(rng.exponential(size=20_000))

        assert abs(gamma) < 0.05
        assert abs(sigma - 1.0) < 0.05

    def test_moments_constant_excesses(self):
        assert fit_moments(np.full(5, 2.0)) == (0.0, 2.0)


class TestExtremeQuantile:
    def test_exponential_tail(self):
        state = SpotState(
            init_threshold=1.0, peaks=np.ones(10), observed=1000, sigma=2.0, q=1e-3
        )
        npt.assert_allclose(state.extreme_quantile, 1.0 + 2.0 * np.log(10.0))

    def test_heavy_tail(self):
        state = SpotState(
            init_threshold=1.0,
            peaks=np.ones(10),
            observed=1000,
            gamma=0.5,
            sigma=2.0,
            q=1e-3,
        )
        npt.assert_allclose(state.extreme_quantile, 1.0 + 4.0 * (np.sqrt(10.0) - 1.0))

    def test_never_below_initial_threshold(self):
        state = SpotState(init_threshold=3.0, peaks=np.ones(10), observed=1000, q=0.5)
        assert state.extreme_quantile == 3.0


class TestSpot:
    def test_threshold_matches_exponential_closed_form(self):
        n, q = 10_000, 1e-4
        within = 0
        for seed in range(20):
            detector = Spot(q=q, level=0.98)
            assert detector.initialize(np.random.default_rng(seed).exponential(size=n))
            state = detector.state
            closed_form = state.init_threshold - state.peaks.mean() * np.log(
                q * n / state.num_peaks
            )
            within += abs(state.extreme_quantile - closed_form) <= 0.05 * closed_form

        assert within >= 18

    def test_flags_a_spike(self, calibration):
        stream = np.random.default_rng(2).exponential(size=1000)
        stream[500] = 100.0
        result = spot_threshold(calibration, stream, q=1e-4, level=0.98)

        assert not result.fallback
        assert result.flags[500] == 1
        assert result.flags.sum() <= 2
        assert result.thresholds.shape == (1000,)
        assert (result.thresholds > 5).all()

    def test_anomalies_do_not_update_the_tail(self, calibration):
        detector = Spot()
        detector.initialize(calibration)
        peaks = detector.state.num_peaks
        observed = detector.state.observed
        detector.run(np.array([1e6]))

        assert detector.state.num_peaks == peaks
        assert detector.state.observed == observed

    def test_moments_fit(self, calibration):
        result = spot_threshold(calibration, np.array([0.5, 50.0]), fit="moments")
        npt.assert_array_equal(result.flags, [0, 1])

    def test_fallback(self, rng, caplog):
        stream = np.arange(200.0)
        with caplog.at_level(logging.WARNING):
            result = spot_threshold(rng.exponential(size=100), stream)

        assert result.fallback
        assert "falling back to ratio thresholding" in caplog.text
        assert result.flags.sum() == 2
        npt.assert_allclose(result.thresholds, np.percentile(stream, 99.0))

    def test_run_before_initialize(self):
        with pytest.raises(RuntimeError, match="initialize"):
            Spot().run(np.zeros(3))

    def test_empty_calibration(self):
        with pytest.raises(DataError, match="calibration"):
            Spot().initialize(np.array([]))

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"q": 0.0}, "q must lie in"),
            ({"level": 1.0}, "level must lie in"),
            ({"fit": "bayes"}, "unknown GPD fit"),
        ],
    )
    def test_invalid(self, kwargs, match):
        with pytest.raises(ConfigError, match=match):
            Spot(**kwargs)

    def test_fit_enum(self):
        assert Spot(fit="moments").fit is GPDFit.MOMENTS
