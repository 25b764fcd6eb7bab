import logging

import numpy as np
import numpy.testing as npt
import pytest

from patchad.data import (
    LabeledSeries,
    NormalizationStats,
    gather_windows,
    load_binary,
    load_csv,
    make_windows,
    normalize,
    save_binary,
    save_series,
    window_starts,
    zscore_fit,
    zscore_fit_apply,
)
from patchad.errors import DataError
from patchad.io import atomic_write, load_scores, save_scores


class TestLabeledSeries:
    def test_one_dimensional_values(self):
        series = LabeledSeries(values=[1.0, 2.0, 3.0])

        assert series.values.shape == (1, 3)
        assert series.channel_names == ("ch0",)
        assert series.labels is None

    def test_read_only(self):
        series = LabeledSeries(values=np.zeros((2, 3)), labels=[0, 1, 0])
        with pytest.raises(ValueError):
            series.values[0, 0] = 1.0

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"labels": [0, 1]}, "labels have shape"),
            ({"labels": [0, 2, 1]}, "labels must be 0 or 1"),
            ({"channel_names": ("a",)}, "1 channel names for 2 channels"),
        ],
    )
    def test_invalid(self, kwargs, match):
        with pytest.raises(DataError, match=match):
            LabeledSeries(values=np.zeros((2, 3)), **kwargs)


class TestCsv:
    def test_load_with_labels(self, labelled_csv):
        series = load_csv(labelled_csv, "label")

        assert series.channels == 2
        assert series.channel_names == ("a", "b")
        npt.assert_array_equal(series.labels, [0, 1, 0])
        npt.assert_array_equal(series.values[1], [2.0, 4e-3, 7.0])

    def test_load_without_labels(self, labelled_csv):
        series = load_csv(labelled_csv)

        assert series.channels == 3
        assert series.labels is None

    def test_missing_label_column(self, labelled_csv):
        with pytest.raises(DataError, match="label column 'y' not found"):
            load_csv(labelled_csv, "y")

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,x\n")
        with pytest.raises(DataError, match="row 3, column 'b'"):
            load_csv(path)

    def test_ragged(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,b\n1,2\n3,4,5\n")
        with pytest.raises(DataError, match="ragged"):
            load_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv(tmp_path / "nope.csv")

    def test_round_trip_is_exact(self, tmp_path, rng):
        scales = 10.0 ** rng.integers(-12, 12, size=(6, 1))
        series = LabeledSeries(
            values=rng.normal(size=(6, 1000)) * scales, labels=rng.integers(0, 2, 1000)
        )
        path = tmp_path / "out.csv"
        save_series(path, series)
        loaded = load_csv(path, "label")

        npt.assert_array_equal(loaded.values, series.values)
        npt.assert_array_equal(loaded.labels, series.labels)


class TestBinary:
    def test_round_trip(self, tmp_path, rng):
        series = LabeledSeries(
            values=rng.normal(size=(2, 7)), labels=[0, 0, 1, 1, 0, 0, 1]
        )
        path = tmp_path / "series.pads"
        save_binary(path, series)
        loaded = load_binary(path)

        npt.assert_array_equal(loaded.values, series.values)
        npt.assert_array_equal(loaded.labels, series.labels)
        assert path.read_bytes()[:4] == b"PADS"

    def test_without_labels(self, tmp_path):
        path = tmp_path / "series.pads"
        save_binary(path, LabeledSeries(values=np.arange(4.0)))
        assert load_binary(path).labels is None

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "series.pads"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(DataError, match="not a PADS file"):
            load_binary(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "series.pads"
        save_binary(path, LabeledSeries(values=np.arange(4.0)))
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(DataError, match="truncated values"):
            load_binary(path)


class TestNormalisation:
    def test_hand_arithmetic(self):
        stats = zscore_fit(LabeledSeries(values=[1.0, 3.0]))

        npt.assert_allclose(stats.mean, [2.0])
        npt.assert_allclose(stats.std, [1.0])
        npt.assert_allclose(stats.apply(np.array([[1.0, 3.0]])), [[-1.0, 1.0]])

    def test_moments(self, rng):
        train = LabeledSeries(values=rng.normal(5.0, 3.0, size=(3, 500)))
        normed = normalize(train, zscore_fit(train))

        npt.assert_allclose(normed.values.mean(axis=1), 0.0, atol=1e-9)
        npt.assert_allclose(normed.values.std(axis=1), 1.0, atol=1e-9)
        assert normed.stats is not None

    def test_constant_channel(self, caplog):
        train = LabeledSeries(values=[[4.0, 4.0, 4.0], [1.0, 2.0, 3.0]])
        with caplog.at_level(logging.WARNING):
            stats = zscore_fit(train)

        npt.assert_array_equal(stats.apply(train.values)[0], [0.0, 0.0, 0.0])
        assert "ch0 is constant" in caplog.text

    def test_train_statistics_only(self, rng):
        train = LabeledSeries(values=rng.normal(size=(2, 100)))
        test = LabeledSeries(values=rng.normal(10.0, 1.0, size=(2, 50)))
        normed_train, (normed_test,) = zscore_fit_apply(train, [test])

        assert normed_test.stats is normed_train.stats
        assert normed_test.values.mean() > 5

    def test_channel_mismatch(self):
        stats = NormalizationStats(mean=[0.0], std=[1.0])
        with pytest.raises(DataError, match="expected 1 channels"):
            stats.apply(np.zeros((2, 3)))


class TestWindows:
    def test_starts(self):
        npt.assert_array_equal(window_starts(10, 5, 5), [0, 5])
        assert len(window_starts(10, 5, 1)) == 6
        npt.assert_array_equal(window_starts(11, 4, 3), [0, 3, 6])
        npt.assert_array_equal(window_starts(11, 4, 3, cover_tail=True), [0, 3, 6, 7])
        npt.assert_array_equal(window_starts(10, 4, 3, cover_tail=True), [0, 3, 6])

    def test_window_too_long(self):
        with pytest.raises(DataError, match="shorter than the window"):
            window_starts(4, 5, 1)

    def test_make_windows(self):
        values = np.arange(20.0).reshape(2, 10)
        batches = list(make_windows(values, 4, stride=2, batch_size=3))

        assert [len(b.starts) for b in batches] == [3, 1]
        npt.assert_array_equal(batches[1].starts, [6])
        window = batches[0].windows[1]
        assert window.shape == (4, 2)
        npt.assert_array_equal(window[:, 0], values[0, 2:6])
        npt.assert_array_equal(window[:, 1], values[1, 2:6])

    def test_partition_reconstructs_prefix(self, rng):
        values = rng.normal(size=(3, 23))
        windows = gather_windows(values, window_starts(23, 5, 5), 5)
        npt.assert_array_equal(
            np.concatenate(list(windows), axis=0).T, values[:, :20]
        )


class TestScoreFiles:
    def test_round_trip(self, tmp_path, rng):
        scores = rng.exponential(size=20)
        flags = (scores > 1).astype(int)
        path = tmp_path / "scores.csv"
        save_scores(path, scores, flags, threshold=1.0)
        frame = load_scores(path)

        assert tuple(frame.columns) == ("timestamp", "score", "flag", "threshold")
        npt.assert_array_equal(frame["score"], scores)
        npt.assert_array_equal(frame["flag"], flags)
        npt.assert_array_equal(frame["threshold"], 1.0)

    def test_per_timestamp_threshold(self, tmp_path):
        path = tmp_path / "scores.csv"
        save_scores(path, [1.0, 2.0, 3.0], threshold=[0.5, 0.6, 0.7])

        npt.assert_array_equal(load_scores(path)["threshold"], [0.5, 0.6, 0.7])
        npt.assert_array_equal(load_scores(path)["flag"], 0)

    def test_flag_count_mismatch(self, tmp_path):
        with pytest.raises(DataError, match="3 scores but 2 flags"):
            save_scores(tmp_path / "scores.csv", [1.0, 2.0, 3.0], [0, 1])

    def test_missing(self, tmp_path):
        with pytest.raises(DataError, match="score file not found"):
            load_scores(tmp_path / "nope.csv")

    def test_wrong_header(self, tmp_path, labelled_csv):
        with pytest.raises(DataError, match="expected columns"):
            load_scores(labelled_csv)

    def test_atomic_write_leaves_nothing_on_failure(self, tmp_path):
        target = tmp_path / "out" / "file.txt"
        with pytest.raises(RuntimeError):
            with atomic_write(target) as fh:
                fh.write("partial")
                raise RuntimeError("boom")

        assert list(target.parent.iterdir()) == []
