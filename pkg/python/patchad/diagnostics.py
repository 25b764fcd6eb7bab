"""
Entropy and variance diagnostics of the two views

Features are treated as Gaussian, so entropy is a function of variance alone.
Anomalous points have a larger variance than normal ones; a view that mixes a
fraction ``k/n`` of anomalous rows has variance
``sigma1^2 + (k/n)(sigma2^2 - sigma1^2)`` up to a network gain ``lambda``.
The intra view mixes positions within a patch and the inter view mixes
patches, so a short anomaly raises the intra variance (and entropy) more
whenever there are more patches than positions.
"""

from __future__ import annotations

import logging

import attrs
import numpy as np

from patchad.autograd import no_grad
from patchad.errors import NumericError
from patchad.model import PatchADModel

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12


def gaussian_entropy(variance: float) -> float:
    """
    Differential entropy ``0.5 * ln(2 pi e variance)`` of a Gaussian

    Raises
    ------
    NumericError
        ``variance`` is not positive
    """
    if not variance > 0:
        raise NumericError(f"variance must be positive, got {variance}")
    return 0.5 * np.log(2 * np.pi * np.e * variance)


def mixture_variance(
    variance_normal: float,
    variance_anomalous: float,
    anomalous: int,
    total: int,
    gain: float = 1.0,
) -> float:
    """
    Variance of a view mixing ``anomalous`` of ``total`` rows

    The normal variance plus the anomalous fraction of the excess variance,
    scaled by ``gain``
    """
    if not 0 <= anomalous <= total or total < 1:
        raise ValueError(f"need 0 <= anomalous <= total, got {anomalous} of {total}")
    return gain * (
        variance_normal + anomalous / total * (variance_anomalous - variance_normal)
    )


def feature_entropy(features: np.ndarray) -> float | None:
    """
    Mean per-dimension Gaussian entropy of ``(samples, D)`` features

    Variances are floored at ``1e-12``. Returns ``None`` with a warning when
    there are fewer than two samples.
    """
    features = np.asarray(features, dtype=float)
    if features.shape[0] < 2:  # noqa: PLR2004
        logger.warning(
            "Need at least 2 samples for an entropy estimate, got %s",
            features.shape[0],
        )
        return None
    variance = np.maximum(features.var(axis=0, ddof=1), VARIANCE_FLOOR)
    return float(np.mean(0.5 * np.log(2 * np.pi * np.e * variance)))


def _views(model: PatchADModel, windows: np.ndarray):
    with no_grad():
        return model(windows)


def feature_entropy_report(
    model: PatchADModel, windows: np.ndarray
) -> dict[int, dict[str, float | None]]:
    """
    Entropy of the inter and intra features per patch size

    Rows of every window's view are pooled as samples.
    """
    report = {}
    for scale in _views(model, windows):
        inter = scale.inter.data.reshape(-1, scale.inter.shape[-1])
        intra = scale.intra.data.reshape(-1, scale.intra.shape[-1])
        report[scale.patch_size] = {
            "inter": feature_entropy(inter),
            "intra": feature_entropy(intra),
        }
    return report


def _within_window_variance(view: np.ndarray) -> np.ndarray:
    # (B, K, D) -> per-window variance over the K rows, averaged over D
    return view.var(axis=1).mean(axis=-1)


def branch_contrast(
    model: PatchADModel, anomalous: np.ndarray, clean: np.ndarray
) -> dict[int, dict[str, float]]:
    """
    Entropy gain of each view on anomalous windows over clean windows

    For every patch size and view this is
    ``0.5 * ln(var_anomalous / var_clean)`` of the within-window feature
    variance, averaged over windows.
    """
    report = {}
    for bad, good in zip(_views(model, anomalous), _views(model, clean)):
        entry = {}
        for name in ("inter", "intra"):
            var_bad = _within_window_variance(getattr(bad, name).data).mean()
            var_good = _within_window_variance(getattr(good, name).data).mean()
            entry[name] = 0.5 * float(
                np.log(max(var_bad, VARIANCE_FLOOR) / max(var_good, VARIANCE_FLOOR))
            )
        report[bad.patch_size] = entry
    return report


@attrs.frozen
class VarianceRow:
    """Measured and predicted feature variance of one view at one patch size"""

    patch_size: int
    view: str
    anomalous_rows: float
    total_rows: int
    gain: float
    measured: float
    predicted: float


def variance_report(
    model: PatchADModel, windows: np.ndarray, labels: np.ndarray
) -> list[VarianceRow]:
    """
    Compare measured view variances with the mixture prediction

    Parameters
    ----------
    model
        Model to inspect
    windows
        ``(B, T, C)`` normalised windows
    labels
        ``(B, T)`` point labels of the windows

    The input variances of normal and anomalous points are measured directly.
    The gain of each view is calibrated on the windows without anomalies, and
    the prediction for the anomalous windows uses the mean number of anomalous
    patches (inter) or anomalous within-patch positions (intra).
    """
    labels = np.asarray(labels).astype(bool)
    flat = windows.reshape(-1, windows.shape[-1])
    point_labels = labels.reshape(-1)
    if point_labels.all() or not point_labels.any():
        logger.warning("Variance report needs both normal and anomalous points")
        return []
    variance_normal = float(flat[~point_labels].var())
    variance_anomalous = float(flat[point_labels].var())
    has_anomaly = labels.any(axis=1)
    if has_anomaly.all():
        logger.warning("Variance report needs at least one clean window")
        return []

    rows = []
    for scale in _views(model, windows):
        n, p = scale.num_patches, scale.patch_size
        patch_labels = labels.reshape(labels.shape[0], n, p)
        counts = {
            "inter": patch_labels.any(axis=2).sum(axis=1),
            "intra": patch_labels.any(axis=1).sum(axis=1),
        }
        totals = {"inter": n, "intra": p}
        for name in ("inter", "intra"):
            per_window = _within_window_variance(getattr(scale, name).data)
            gain = per_window[~has_anomaly].mean() / variance_normal
            k = float(counts[name][has_anomaly].mean())
            rows.append(
                VarianceRow(
                    patch_size=p,
                    view=name,
                    anomalous_rows=k,
                    total_rows=totals[name],
                    gain=float(gain),
                    measured=float(per_window[has_anomaly].mean()),
                    predicted=mixture_variance(
                        variance_normal, variance_anomalous, k, totals[name], gain
                    ),
                )
            )
    return rows
