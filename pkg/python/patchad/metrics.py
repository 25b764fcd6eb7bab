"""
Evaluation metrics for point-labelled anomaly detection

Point-adjusted and plain precision/recall/F1, ROC-AUC, affiliation metrics
and the volume under the range-ROC and range-PR surfaces, collected into an
:class:`EvalReport`.
"""

from __future__ import annotations

import logging
from typing import Any

import attrs
import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from sklearn import metrics

from patchad.affiliation import affiliation_metrics
from patchad.errors import MetricUndefinedError, ShapeError
from patchad.scoring import threshold_by_ratio

logger = logging.getLogger(__name__)

VUS_MAX_BUFFER = 250


def _binary(values: Any, name: str) -> np.ndarray:
    array = np.asarray(values).astype(int)
    if array.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {array.shape}")
    return array


def _same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape[0]} and {b.shape[0]}")


def events_from_labels(labels: Any) -> list[tuple[int, int]]:
    """Maximal runs of ones as half-open ``(start, end)`` intervals"""
    padded = np.concatenate([[0], _binary(labels, "labels") > 0, [0]]).astype(int)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [(int(s), int(e)) for s, e in zip(starts, ends)]


def point_adjust(pred: Any, gt: Any) -> np.ndarray:
    """
    Mark a whole ground-truth segment detected when any point of it is predicted

    Predictions outside ground-truth segments are left alone.
    """
    pred, gt = _binary(pred, "pred"), _binary(gt, "gt")
    _same_length(pred, gt)
    adjusted = pred.copy()
    for start, end in events_from_labels(gt):
        if adjusted[start:end].any():
            adjusted[start:end] = 1
    return adjusted


@attrs.frozen
class Counts:
    tp: int
    fp: int
    fn: int
    tn: int


def confusion(pred: Any, gt: Any) -> Counts:
    pred, gt = _binary(pred, "pred"), _binary(gt, "gt")
    _same_length(pred, gt)
    tn, fp, fn, tp = metrics.confusion_matrix(gt, pred, labels=[0, 1]).ravel()
    return Counts(tp=int(tp), fp=int(fp), fn=int(fn), tn=int(tn))


def prf(pred: Any, gt: Any) -> tuple[float, float, float, float]:
    """
    Precision, recall, F1 and accuracy

    Precision is 0 without predicted positives, recall is 0 without true
    positives and F1 is 0 when both are 0.
    """
    c = confusion(pred, gt)
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    total = c.tp + c.fp + c.fn + c.tn
    acc = (c.tp + c.tn) / total if total else 0.0
    return precision, recall, f1, acc


def _check_classes(weights_pos: np.ndarray, weights_neg: np.ndarray) -> None:
    if not weights_pos.sum() > 0 or not weights_neg.sum() > 0:
        raise MetricUndefinedError("AUC needs both positive and negative labels")


def roc_auc(scores: Any, gt: Any) -> float:
    """
    Probability that a random positive outscores a random negative, ties count half

    Raises
    ------
    MetricUndefinedError
        ``gt`` holds a single class
    """
    scores = np.asarray(scores, dtype=float)
    gt = _binary(gt, "gt")
    _same_length(scores, gt)
    _check_classes(gt, 1 - gt)
    return float(metrics.roc_auc_score(gt, scores))


def range_smooth_labels(gt: Any, buffer: int) -> np.ndarray:
    """
    Extend every segment by a linear ramp of ``buffer`` points on each side

    The point at distance ``d`` from a segment gets ``1 - (d - 1) / buffer``.
    Overlapping ramps take the maximum.
    """
    if buffer < 0:
        raise ValueError(f"buffer must be >= 0, got {buffer}")
    gt = _binary(gt, "gt")
    smoothed = gt.astype(float)
    n = gt.shape[0]
    ramp = 1.0 - np.arange(buffer) / buffer if buffer else np.empty(0)
    for start, end in events_from_labels(gt):
        left = np.arange(start - 1, start - 1 - buffer, -1)
        right = np.arange(end, end + buffer)
        for idx in (left, right):
            keep = (idx >= 0) & (idx < n)
            smoothed[idx[keep]] = np.maximum(smoothed[idx[keep]], ramp[keep])
    return smoothed


def _weighted_auc(scores: np.ndarray, soft: np.ndarray) -> tuple[float, float]:
    # every point is a positive with weight `soft` and a negative with weight `1 - soft`
    y = np.concatenate([np.ones_like(soft), np.zeros_like(soft)])
    s = np.concatenate([scores, scores])
    w = np.concatenate([soft, 1.0 - soft])
    keep = w > 0
    _check_classes(soft, 1.0 - soft)
    return (
        float(metrics.roc_auc_score(y[keep], s[keep], sample_weight=w[keep])),
        float(metrics.average_precision_score(y[keep], s[keep], sample_weight=w[keep])),
    )


def default_vus_buffer(gt: Any) -> int:
    """Four times the mean segment length, at most 250"""
    events = events_from_labels(gt)
    if not events:
        return 0
    mean_length = np.mean([e - s for s, e in events])
    return int(min(VUS_MAX_BUFFER, round(4 * mean_length)))


def vus(scores: Any, gt: Any, max_buffer: int | None = None) -> tuple[float, float]:
    """
    Volume under the range-ROC and range-PR surfaces

    For every buffer width ``0..max_buffer`` the scores are ranked against
    :func:`range_smooth_labels`; the per-width AUCs are integrated by the
    trapezoid rule and divided by ``max_buffer``. With ``max_buffer = 0`` the
    result is the plain AUC pair.

    Raises
    ------
    MetricUndefinedError
        ``gt`` holds a single class
    """
    scores = np.asarray(scores, dtype=float)
    gt = _binary(gt, "gt")
    _same_length(scores, gt)
    _check_classes(gt, 1 - gt)
    max_buffer = default_vus_buffer(gt) if max_buffer is None else max_buffer
    pairs = np.array(
        [
            _weighted_auc(scores, range_smooth_labels(gt, b))
            for b in range(max_buffer + 1)
        ]
    )
    if max_buffer == 0:
        return float(pairs[0, 0]), float(pairs[0, 1])
    grid = np.arange(max_buffer + 1)
    return (
        float(trapezoid(pairs[:, 0], grid) / max_buffer),
        float(trapezoid(pairs[:, 1], grid) / max_buffer),
    )


@attrs.frozen
class EvalReport:
    """
    Every metric for one set of scores

    ``acc``, ``precision``, ``recall`` and ``pa_f1`` are computed on
    point-adjusted predictions; ``cls_precision``, ``cls_recall`` and
    ``f1_cls`` on the raw flags. A metric without a defined value is ``None``
    and the reason is kept in ``undefined``.
    """

    acc: float
    precision: float
    recall: float
    pa_f1: float
    cls_precision: float
    cls_recall: float
    f1_cls: float
    auc: float | None
    aff_precision: float | None
    aff_recall: float | None
    aff_f1: float | None
    vus_roc: float | None
    vus_pr: float | None
    threshold: float | None
    sigma: float | None
    counts: Counts
    adjusted_counts: Counts
    undefined: dict[str, str] = attrs.field(factory=dict)

    def to_parameters(self) -> dict[str, Any]:
        return attrs.asdict(self)

    def to_table(self) -> str:
        rows = {
            k: ("undefined" if v is None else v)
            for k, v in self.to_parameters().items()
            if k not in ("counts", "adjusted_counts", "undefined")
        }
        return pd.Series(rows, dtype=object).to_string()


def evaluate(
    scores: Any,
    gt: Any,
    sigma: float | None = 1.0,
    flags: Any | None = None,
    threshold: float | None = None,
    max_buffer: int | None = None,
) -> EvalReport:
    """
    Assemble an :class:`EvalReport`

    Parameters
    ----------
    scores
        One score per timestamp
    gt
        Binary ground truth
    sigma
        Anomaly ratio in percent for :func:`threshold_by_ratio`; ignored when
        ``flags`` is given
    flags
        Precomputed predictions, e.g. from SPOT
    threshold
        Threshold to report alongside ``flags``
    max_buffer
        Largest VUS buffer width, see :func:`vus`
    """
    scores = np.asarray(scores, dtype=float)
    gt = _binary(gt, "gt")
    _same_length(scores, gt)
    if flags is None:
        threshold, flags = threshold_by_ratio(scores, sigma)
    else:
        sigma = None
    flags = _binary(flags, "flags")
    adjusted = point_adjust(flags, gt)

    precision, recall, pa_f1, acc = prf(adjusted, gt)
    cls_precision, cls_recall, f1_cls, _ = prf(flags, gt)

    undefined: dict[str, str] = {}
    auc = vus_roc = vus_pr = None
    aff_precision = aff_recall = aff_f1 = None
    try:
        auc = roc_auc(scores, gt)
        vus_roc, vus_pr = vus(scores, gt, max_buffer)
    except MetricUndefinedError as exc:
        undefined.update(auc=str(exc), vus_roc=str(exc), vus_pr=str(exc))
    try:
        aff = affiliation_metrics(
            events_from_labels(flags), events_from_labels(gt), gt.shape[0]
        )
        aff_precision, aff_recall, aff_f1 = aff.precision, aff.recall, aff.f1
    except MetricUndefinedError as exc:
        undefined.update(aff_precision=str(exc), aff_f1=str(exc))
        if events_from_labels(gt):
            aff_recall = 0.0
        else:
            undefined["aff_recall"] = str(exc)
    for name, reason in undefined.items():
        logger.warning("%s is undefined: %s", name, reason)

    return EvalReport(
        acc=acc,
        precision=precision,
        recall=recall,
        pa_f1=pa_f1,
        cls_precision=cls_precision,
        cls_recall=cls_recall,
        f1_cls=f1_cls,
        auc=auc,
        aff_precision=aff_precision,
        aff_recall=aff_recall,
        aff_f1=aff_f1,
        vus_roc=vus_roc,
        vus_pr=vus_pr,
        threshold=threshold,
        sigma=sigma,
        counts=confusion(flags, gt),
        adjusted_counts=confusion(adjusted, gt),
        undefined=undefined,
    )
