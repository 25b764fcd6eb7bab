import numpy as np
import numpy.testing as npt
import pytest

from patchad.errors import ConfigError, DataError, ShapeError
from patchad.scoring import (
    fuse_scales,
    pointwise_score,
    score_full_series,
    score_scales,
    score_windows,
    threshold_by_ratio,
)


class TestPointwise:
    def test_identical_views(self, rng):
        views = rng.normal(size=(2, 5, 3))
        npt.assert_array_equal(pointwise_score(views, views), 0.0)

    def test_symmetric_and_positive(self, rng):
        a, b = rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 5, 3))

        npt.assert_allclose(pointwise_score(a, b), pointwise_score(b, a))
        assert pointwise_score(a, b).shape == (2, 5)
        assert (pointwise_score(a, b) > 0).all()

    def test_fuse(self):
        fused = fuse_scales([np.array([1.0, 2.0]), np.array([3.0, 6.0])])
        npt.assert_allclose(fused, [2.0, 4.0])

    def test_fuse_errors(self):
        with pytest.raises(ShapeError, match="no scale scores"):
            fuse_scales([])
        with pytest.raises(ShapeError, match="different shapes"):
            fuse_scales([np.zeros(2), np.zeros(3)])


class TestWindows:
    def test_per_scale(self, tiny_model, rng):
        per_scale = score_scales(tiny_model, rng.normal(size=(3, 12, 2)))

        assert len(per_scale) == 2
        assert all(s.shape == (3, 12) for s in per_scale)
        assert all((s >= 0).all() for s in per_scale)

    def test_fused_is_mean(self, tiny_model, rng):
        windows = rng.normal(size=(3, 12, 2))
        per_scale = score_scales(tiny_model, windows)
        fused = score_windows(tiny_model, windows)
        npt.assert_allclose(fused, np.mean(per_scale, axis=0))


class TestFullSeries:
    def test_covers_every_timestamp(self, tiny_model, rng):
        result = score_full_series(rng.normal(size=(2, 30)), tiny_model)

        assert len(result) == 30
        assert result.window == 12
        assert result.stride == 12
        assert np.isfinite(result.scores).all()
        assert (result.scores >= 0).all()

    def test_matches_window_scores(self, tiny_model, rng):
        values = rng.normal(size=(2, 24))
        windows = np.stack([values[:, :12].T, values[:, 12:].T])
        expected = score_windows(tiny_model, windows).reshape(-1)

        npt.assert_allclose(score_full_series(values, tiny_model).scores, expected)

    def test_overlapping_windows_average(self, tiny_model, rng):
        values = rng.normal(size=(2, 13))
        first = score_windows(tiny_model, values[:, :12].T[None])[0]
        second = score_windows(tiny_model, values[:, 1:].T[None])[0]
        scores = score_full_series(values, tiny_model, stride=1).scores

        npt.assert_allclose(scores[0], first[0])
        npt.assert_allclose(scores[5], (first[5] + second[4]) / 2)
        npt.assert_allclose(scores[12], second[11])

    def test_batch_size_invariant(self, tiny_model, rng):
        values = rng.normal(size=(2, 60))
        npt.assert_allclose(
            score_full_series(values, tiny_model, batch_size=1).scores,
            score_full_series(values, tiny_model, batch_size=128).scores,
        )

    def test_channel_mismatch(self, tiny_model):
        with pytest.raises(DataError, match="model expects 2 channels, series has 3"):
            score_full_series(np.zeros((3, 24)), tiny_model)

    def test_too_short(self, tiny_model):
        with pytest.raises(DataError, match="shorter than the window"):
            score_full_series(np.zeros((2, 5)), tiny_model)

    @pytest.mark.parametrize("stride", [0, 13, 20])
    def test_stride_outside_window(self, tiny_model, stride):
        match = f"stride must lie in \\[1, 12\\], got {stride}"
        with pytest.raises(ConfigError, match=match):
            score_full_series(np.zeros((2, 60)), tiny_model, stride=stride)

    def test_largest_stride_scores_everything(self, tiny_model, rng):
        series = rng.normal(size=(2, 61))
        scores = score_full_series(series, tiny_model, stride=12).scores

        assert np.isfinite(scores).all()
        assert (scores >= 0).all()


class TestRatioThreshold:
    def test_percentile(self):
        threshold, flags = threshold_by_ratio(np.arange(100.0), 1.0)

        assert threshold == pytest.approx(98.01)
        assert flags.sum() == 1
        assert flags[-1] == 1

    def test_constant_scores_flag_nothing(self):
        _, flags = threshold_by_ratio(np.ones(50), 5.0)
        assert flags.sum() == 0

    @pytest.mark.parametrize("sigma", [0.0, 100.0, -1.0])
    def test_invalid_sigma(self, sigma):
        with pytest.raises(ConfigError, match="sigma must lie in"):
            threshold_by_ratio(np.arange(10.0), sigma)

    def test_empty(self):
        with pytest.raises(DataError, match="empty"):
            threshold_by_ratio(np.array([]), 1.0)
