import numpy as np
import numpy.testing as npt
import pytest

from patchad.affiliation import affiliation_metrics
from patchad.errors import MetricUndefinedError, ShapeError
from patchad.metrics import (
    EvalReport,
    default_vus_buffer,
    evaluate,
    events_from_labels,
    point_adjust,
    prf,
    range_smooth_labels,
    roc_auc,
    vus,
)


@pytest.fixture()
def labelled_scores():
    rng = np.random.default_rng(3)
    gt = np.zeros(200, dtype=int)
    for start, end in [(20, 25), (80, 83), (150, 160)]:
        gt[start:end] = 1
    scores = rng.random(200) + 0.5 * gt
    return scores, gt


def _pair_auc(scores, positive, negative):
    # weighted share of (positive, negative) pairs ranked correctly, ties count half
    diff = scores[:, None] - scores[None, :]
    wins = (diff > 0) + 0.5 * (diff == 0)
    pairs = positive[:, None] * negative[None, :]
    return (wins * pairs).sum() / pairs.sum()


def _average_precision(scores, gt):
    hits = gt[np.argsort(-scores)]
    precision_at_k = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return (precision_at_k * hits).sum() / hits.sum()


def _adjust_loop(pred, gt):
    adjusted = list(pred)
    i = 0
    while i < len(gt):
        if gt[i]:
            j = i
            while j < len(gt) and gt[j]:
                j += 1
            if any(adjusted[i:j]):
                adjusted[i:j] = [1] * (j - i)
            i = j
        else:
            i += 1
    return np.array(adjusted)


def _f1(pred, gt):
    tp = int(((pred == 1) & (gt == 1)).sum())
    fp = int(((pred == 1) & (gt == 0)).sum())
    fn = int(((pred == 0) & (gt == 1)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if tp else 0.0
    return precision, recall, f1


class TestPointAdjust:
    def test_example(self):
        gt = [0, 1, 1, 1, 0, 1]
        pred = [0, 0, 1, 0, 0, 0]
        adjusted = point_adjust(pred, gt)

        npt.assert_array_equal(adjusted, [0, 1, 1, 1, 0, 0])
        precision, recall, f1, acc = prf(adjusted, gt)
        assert precision == 1.0
        assert recall == 0.75
        npt.assert_allclose(f1, 0.857142857)
        npt.assert_allclose(acc, 5 / 6)

    def test_events(self):
        assert events_from_labels([1, 1, 0, 0, 1, 0, 1]) == [(0, 2), (4, 5), (6, 7)]
        assert events_from_labels([0, 0]) == []

    def test_dominates_and_is_idempotent(self, rng):
        for _ in range(1000):
            gt = (rng.random(60) < 0.2).astype(int)
            pred = (rng.random(60) < 0.1).astype(int)
            adjusted = point_adjust(pred, gt)

            assert (adjusted >= pred).all()
            assert prf(adjusted, gt)[2] >= prf(pred, gt)[2]
            npt.assert_array_equal(point_adjust(adjusted, gt), adjusted)
            npt.assert_array_equal(adjusted, _adjust_loop(pred, gt))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError, match="length mismatch"):
            point_adjust([0, 1], [0, 1, 0])

    def test_empty_prediction(self):
        assert prf([0, 0, 0], [0, 1, 0])[:3] == (0.0, 0.0, 0.0)


class TestAuc:
    def test_example(self):
        assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)

    def test_single_class(self):
        with pytest.raises(MetricUndefinedError):
            roc_auc([0.1, 0.2], [0, 0])

    def test_against_pair_counting(self, labelled_scores):
        scores, gt = labelled_scores
        npt.assert_allclose(roc_auc(scores, gt), _pair_auc(scores, gt, 1 - gt))


class TestVus:
    def test_ramp(self):
        npt.assert_allclose(
            range_smooth_labels([0, 0, 0, 1, 0, 0, 0], 2), [0, 0.5, 1, 1, 1, 0.5, 0]
        )
        npt.assert_array_equal(range_smooth_labels([0, 1, 0], 0), [0, 1, 0])

    def test_overlapping_ramps_take_maximum(self):
        npt.assert_allclose(range_smooth_labels([1, 0, 0, 1], 3), [1, 1, 1, 1])

    def test_default_buffer(self):
        gt = np.zeros(50, dtype=int)
        gt[5:8] = 1
        gt[20:25] = 1
        assert default_vus_buffer(gt) == 16
        assert default_vus_buffer(np.r_[np.ones(100), np.zeros(10)]) == 250

    def test_zero_buffer_is_plain_auc(self, labelled_scores):
        scores, gt = labelled_scores
        vus_roc, vus_pr = vus(scores, gt, max_buffer=0)

        npt.assert_allclose(vus_roc, roc_auc(scores, gt))
        npt.assert_allclose(vus_pr, _average_precision(scores, gt))

    def test_against_weighted_pairs(self, labelled_scores):
        scores, gt = labelled_scores
        per_width = [
            _pair_auc(scores, smooth, 1 - smooth)
            for smooth in (range_smooth_labels(gt, b) for b in range(5))
        ]
        expected = (sum(per_width) - (per_width[0] + per_width[-1]) / 2) / 4

        npt.assert_allclose(vus(scores, gt, max_buffer=4)[0], expected)

    def test_random_scores(self, rng):
        gt = np.zeros(2000, dtype=int)
        for start in range(100, 2000, 400):
            gt[start : start + 20] = 1
        vus_roc, _ = vus(rng.random(2000), gt)
        assert abs(vus_roc - 0.5) < 0.05


class TestEvaluate:
    def test_against_brute_force(self, labelled_scores):
        scores, gt = labelled_scores
        report = evaluate(scores, gt, sigma=5.0, max_buffer=4)
        flags = (scores > np.percentile(scores, 95.0)).astype(int)
        adjusted = _adjust_loop(flags, gt)

        assert report.threshold == pytest.approx(np.percentile(scores, 95.0))
        assert report.sigma == 5.0
        npt.assert_allclose(
            (report.precision, report.recall, report.pa_f1), _f1(adjusted, gt)
        )
        npt.assert_allclose(
            (report.cls_precision, report.cls_recall, report.f1_cls), _f1(flags, gt)
        )
        npt.assert_allclose(report.auc, _pair_auc(scores, gt, 1 - gt))
        aff = affiliation_metrics(
            events_from_labels(flags), events_from_labels(gt), 200
        )
        assert (report.aff_precision, report.aff_recall) == (aff.precision, aff.recall)
        assert report.adjusted_counts.tp == int((adjusted & gt).sum())
        assert report.undefined == {}

    def test_given_flags(self, labelled_scores):
        scores, gt = labelled_scores
        report = evaluate(scores, gt, flags=gt, threshold=0.7, max_buffer=0)

        assert report.sigma is None
        assert report.threshold == 0.7
        assert report.pa_f1 == 1.0
        assert report.aff_f1 == 1.0

    def test_no_anomalies(self, rng):
        report = evaluate(rng.random(100), np.zeros(100), sigma=1.0)

        assert report.auc is None
        assert report.vus_roc is None
        assert report.aff_precision is None
        assert report.aff_recall is None
        names = {"auc", "vus_roc", "vus_pr", "aff_precision", "aff_recall", "aff_f1"}
        assert names <= set(report.undefined)
        assert "undefined" in report.to_table()

    def test_no_predictions(self, labelled_scores):
        scores, gt = labelled_scores
        report = evaluate(scores, gt, flags=np.zeros(200), max_buffer=0)

        assert report.aff_recall == 0.0
        assert report.aff_precision is None
        assert report.pa_f1 == 0.0

    def test_serialisable(self, labelled_scores):
        scores, gt = labelled_scores
        parameters = evaluate(scores, gt, max_buffer=0).to_parameters()

        assert isinstance(parameters["counts"], dict)
        assert set(parameters) == {f.name for f in EvalReport.__attrs_attrs__}
