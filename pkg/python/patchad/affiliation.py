"""
Affiliation precision and recall of event predictions

The timeline is split into one zone per ground-truth event, bounded by the
midpoints between consecutive events. Inside a zone, every predicted point is
scored by the probability that a point drawn uniformly from the zone lies at
least as far from the event (precision), and every event point by the
probability that a uniform point lies at least as far from it as the nearest
prediction does (recall).

Events are half-open intervals ``[start, end)`` on a continuous timeline
``[0, length)``. The integrands are piecewise linear, so they are integrated
exactly by the midpoint rule between their breakpoints.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence

import attrs
import numpy as np

from patchad.errors import MetricUndefinedError

Interval = tuple[float, float]


@attrs.frozen
class AffiliationResult:
    """
    Affiliation metrics and their per-zone values

    ``zone_precision`` holds ``nan`` for zones without predictions; those zones
    do not enter ``precision``.
    """

    precision: float
    recall: float
    f1: float
    zone_precision: tuple[float, ...]
    zone_recall: tuple[float, ...]


def affiliation_zones(gt_events: Sequence[Interval], length: float) -> list[Interval]:
    """
    Zone of each event: from the midpoint with the previous event to the
    midpoint with the next, clipped to ``[0, length)``
    """
    zones = []
    for i, (start, end) in enumerate(gt_events):
        left = 0.0 if i == 0 else (gt_events[i - 1][1] + start) / 2
        last = i == len(gt_events) - 1
        right = float(length) if last else (end + gt_events[i + 1][0]) / 2
        zones.append((left, right))
    return zones


def _clip(events: Iterable[Interval], zone: Interval) -> list[Interval]:
    clipped = []
    for start, end in events:
        lo, hi = max(start, zone[0]), min(end, zone[1])
        if hi > lo:
            clipped.append((lo, hi))
    return clipped


def _integrate(
    fun: Callable[[float], float], lo: float, hi: float, breaks: Iterable[float]
) -> float:
    points = np.unique(np.clip([lo, hi, *breaks], lo, hi))
    mids = (points[:-1] + points[1:]) / 2
    return float(sum(fun(m) * w for m, w in zip(mids, np.diff(points))))


def _distance(y: float, interval: Interval) -> float:
    return max(interval[0] - y, 0.0, y - interval[1])


def _precision_survival(d: float, event: Interval, zone: Interval) -> float:
    # share of the zone at distance >= d from the event
    if d <= 0:
        return 1.0
    (j0, j1), (z0, z1) = event, zone
    return (max(0.0, j0 - d - z0) + max(0.0, z1 - (j1 + d))) / (z1 - z0)


def _recall_survival(y: float, d: float, zone: Interval) -> float:
    # share of the zone at distance >= d from y
    if d <= 0:
        return 1.0
    z0, z1 = zone
    return (max(0.0, y - d - z0) + max(0.0, z1 - y - d)) / (z1 - z0)


def zone_precision(
    predictions: Sequence[Interval], event: Interval, zone: Interval
) -> float:
    """Mean precision probability over the predicted points in ``zone``"""
    predictions = _clip(predictions, zone)
    if not predictions:
        return float("nan")
    (j0, j1), (z0, z1) = event, zone
    breaks = [j0, j1, j0 + j1 - z1, j0 + j1 - z0]

    def fun(y: float) -> float:
        return _precision_survival(_distance(y, event), event, zone)

    total = sum(_integrate(fun, lo, hi, breaks) for lo, hi in predictions)
    return total / sum(hi - lo for lo, hi in predictions)


def zone_recall(
    predictions: Sequence[Interval], event: Interval, zone: Interval
) -> float:
    """Mean recall probability over the points of ``event``; zero without predictions"""
    predictions = sorted(_clip(predictions, zone))
    if not predictions:
        return 0.0
    z0, z1 = zone
    breaks = []
    for i0, i1 in predictions:
        breaks += [i0, i1, (i0 + z0) / 2, (i1 + z1) / 2]
    breaks += [(a[1] + b[0]) / 2 for a, b in zip(predictions, predictions[1:])]

    def fun(y: float) -> float:
        d = min(_distance(y, p) for p in predictions)
        return _recall_survival(y, d, zone)

    return _integrate(fun, event[0], event[1], breaks) / (event[1] - event[0])


def affiliation_metrics(
    pred_events: Sequence[Interval], gt_events: Sequence[Interval], length: float
) -> AffiliationResult:
    """
    Affiliation precision, recall and F1

    Raises
    ------
    MetricUndefinedError
        There are no ground-truth events, or no zone holds a prediction
    """
    gt_events = sorted((float(s), float(e)) for s, e in gt_events)
    pred_events = [(float(s), float(e)) for s, e in pred_events]
    if not gt_events:
        raise MetricUndefinedError(
            "affiliation metrics need at least one ground-truth event"
        )
    zones = affiliation_zones(gt_events, length)
    precisions = [zone_precision(pred_events, e, z) for e, z in zip(gt_events, zones)]
    recalls = [zone_recall(pred_events, e, z) for e, z in zip(gt_events, zones)]
    if np.all(np.isnan(precisions)):
        raise MetricUndefinedError(
            "affiliation precision needs at least one prediction"
        )
    precision = float(np.nanmean(precisions))
    recall = float(np.mean(recalls))
    total = precision + recall
    f1 = 0.0 if total == 0 else 2 * precision * recall / total
    return AffiliationResult(
        precision=precision,
        recall=recall,
        f1=f1,
        zone_precision=tuple(precisions),
        zone_recall=tuple(recalls),
    )
