"""
Anomaly scores from the two views and ratio thresholding
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import attrs
import numpy as np

from patchad.autograd import Tensor, as_tensor, no_grad
from patchad.data import LabeledSeries, make_windows
from patchad.errors import ConfigError, DataError, ShapeError
from patchad.model import PatchADModel
from patchad.objective import kl_rowwise, upsample_inter, upsample_intra

logger = logging.getLogger(__name__)


@attrs.frozen(eq=False)
class ScoreSeries:
    """One non-negative score per timestamp of the evaluated series"""

    scores: np.ndarray
    window: int
    stride: int

    def __len__(self) -> int:
        return self.scores.shape[0]


def pointwise_score(
    inter: Tensor | np.ndarray, intra: Tensor | np.ndarray
) -> np.ndarray:
    """
    Symmetric KL between the upsampled views at every time step

    Inputs are ``(B, T, D)``, the result is ``(B, T)``.
    """
    with no_grad():
        a, b = as_tensor(inter), as_tensor(intra)
        score = kl_rowwise(a, b) + kl_rowwise(b, a)
    return np.maximum(score.data, 0.0)


def fuse_scales(per_scale: Sequence[np.ndarray]) -> np.ndarray:
    """
    Elementwise mean of the per-scale scores

    Raises
    ------
    ShapeError
        No scores are given or their shapes differ
    """
    if not per_scale:
        raise ShapeError("no scale scores to fuse")
    shapes = {np.shape(s) for s in per_scale}
    if len(shapes) != 1:
        raise ShapeError(f"scale scores have different shapes: {sorted(shapes)}")
    return np.mean(np.stack(per_scale), axis=0)


def score_scales(model: PatchADModel, windows: np.ndarray) -> list[np.ndarray]:
    """Per-scale ``(B, T)`` scores of a batch of normalised windows"""
    with no_grad():
        outputs = model(windows)
    return [
        pointwise_score(
            upsample_inter(scale.inter, scale.patch_size),
            upsample_intra(scale.intra, scale.num_patches),
        )
        for scale in outputs
    ]


def score_windows(model: PatchADModel, windows: np.ndarray) -> np.ndarray:
    """Fused ``(B, T)`` scores of a batch of normalised windows"""
    return fuse_scales(score_scales(model, windows))


def score_full_series(
    series: LabeledSeries | np.ndarray,
    model: PatchADModel,
    stride: int | None = None,
    batch_size: int = 128,
) -> ScoreSeries:
    """
    Score every timestamp of a normalised series

    Windows advance by ``stride`` (default: the window length) and a final
    right-aligned window covers any remainder. A timestamp covered by several
    windows gets the mean of their scores.

    Raises
    ------
    DataError
        The series is shorter than the window or has the wrong channel count
    ConfigError
        ``stride`` is not in ``[1, window]``, longer strides leave timestamps
        unscored
    """
    if isinstance(series, LabeledSeries):
        values = series.values
    else:
        values = np.asarray(series, dtype=float)
    window = model.config.window
    stride = window if stride is None else stride
    if not 1 <= stride <= window:
        raise ConfigError(f"stride must lie in [1, {window}], got {stride}")
    if values.shape[0] != model.config.channels:
        raise DataError(
            f"model expects {model.config.channels} channels, "
            f"series has {values.shape[0]}"
        )

    total = np.zeros(values.shape[1])
    coverage = np.zeros(values.shape[1])
    for batch in make_windows(values, window, stride, batch_size, cover_tail=True):
        scores = score_windows(model, batch.windows)
        for start, row in zip(batch.starts, scores):
            total[start : start + window] += row
            coverage[start : start + window] += 1
    logger.debug("Scored %s timestamps with stride %s", values.shape[1], stride)
    return ScoreSeries(scores=total / coverage, window=window, stride=stride)


def threshold_by_ratio(scores: np.ndarray, sigma: float) -> tuple[float, np.ndarray]:
    """
    Flag roughly ``sigma`` percent of the points

    The threshold is the ``(100 - sigma)``-th percentile with linear
    interpolation; a point is flagged when its score is strictly above it.

    Raises
    ------
    DataError
        ``scores`` is empty
    ConfigError
        ``sigma`` is not strictly between 0 and 100
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise DataError("cannot threshold an empty score array")
    if not 0.0 < sigma < 100.0:  # noqa: PLR2004
        raise ConfigError(f"sigma must lie in (0, 100), got {sigma}")
    threshold = float(np.percentile(scores, 100.0 - sigma, method="linear"))
    return threshold, (scores > threshold).astype(int)
