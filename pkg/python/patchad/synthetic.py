"""
Synthetic multivariate series with labelled anomalies

The base signal of every channel is a noisy sine. Five kinds of anomalies can
be injected:

``global_point``
    additive spike of ``magnitude`` times the series standard deviation
``contextual_point``
    a value inside the global range that deviates by at least three noise
    standard deviations from the local mean over two periods
``seasonal``
    the sine period is multiplied by ``magnitude`` inside the window
``group_point``
    a run of points redrawn with variance ``magnitude**2 * noise_std**2``
``trend``
    a linear drift of slope ``magnitude * noise_std`` per step over the window;
    the offset reached at its end is carried to the end of the series and
    only the drifting window is labelled
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Mapping
from typing import Any

import attrs
import numpy as np

from patchad.config import from_parameters, positive, to_parameters
from patchad.data import LabeledSeries
from patchad.errors import ConfigError

logger = logging.getLogger(__name__)

CONTEXTUAL_SIGMAS = 3.0


class AnomalyKind(str, enum.Enum):
    GLOBAL_POINT = "global_point"
    CONTEXTUAL_POINT = "contextual_point"
    SEASONAL = "seasonal"
    GROUP_POINT = "group_point"
    TREND = "trend"


def _channels(value: Any) -> tuple[int, ...] | None:
    return None if value is None else tuple(int(v) for v in value)


@attrs.frozen(kw_only=True)
class AnomalySpec:
    """
    One injected anomaly

    ``channels`` lists the affected channels, all channels when not given.
    """

    kind: AnomalyKind = attrs.field(converter=AnomalyKind)
    start: int = attrs.field(validator=attrs.validators.ge(0))
    duration: int = attrs.field(default=1, validator=positive)
    magnitude: float = attrs.field(default=5.0, converter=float)
    channels: tuple[int, ...] | None = attrs.field(default=None, converter=_channels)

    @property
    def end(self) -> int:
        return self.start + self.duration

    @classmethod
    def from_parameters(cls, parameters: Mapping[str, Any]) -> AnomalySpec:
        return from_parameters(cls, parameters)


def _anomalies(value: Any) -> tuple[AnomalySpec, ...]:
    return tuple(
        a if isinstance(a, AnomalySpec) else AnomalySpec.from_parameters(a)
        for a in value
    )


@attrs.frozen(kw_only=True)
class SynthSpec:
    """
    Parameters of a synthetic series

    Attributes
    ----------
    length
        Number of timestamps
    channels
        Number of channels
    period
        Period of the base sine in steps
    amplitude
        Amplitude of the base sine
    noise_std
        Standard deviation of the Gaussian noise
    anomalies
        Anomalies to inject, overlapping anomalies take the union of labels
    seed
        Seed of every random draw
    """

    length: int = attrs.field(validator=positive)
    channels: int = attrs.field(default=1, validator=positive)
    period: float = attrs.field(default=50.0, converter=float)
    amplitude: float = attrs.field(default=1.0, converter=float)
    noise_std: float = attrs.field(default=0.1, converter=float)
    anomalies: tuple[AnomalySpec, ...] = attrs.field(default=(), converter=_anomalies)
    seed: int = 0

    def __attrs_post_init__(self) -> None:
        if self.period <= 0:
            raise ConfigError(f"period must be positive, got {self.period}")
        if self.noise_std <= 0:
            raise ConfigError(f"noise_std must be positive, got {self.noise_std}")
        for anomaly in self.anomalies:
            if anomaly.end > self.length:
                raise ConfigError(
                    f"{anomaly.kind.value} anomaly [{anomaly.start}, {anomaly.end}) "
                    f"does not fit in a series of length {self.length}"
                )
            if anomaly.channels is not None and not all(
                0 <= c < self.channels for c in anomaly.channels
            ):
                raise ConfigError(
                    f"anomaly channels {anomaly.channels} out of range "
                    f"for {self.channels} channels"
                )
            if anomaly.kind is AnomalyKind.GROUP_POINT and anomaly.magnitude <= 1:
                raise ConfigError("group_point anomalies need magnitude > 1")

    @classmethod
    def from_parameters(cls, parameters: Mapping[str, Any]) -> SynthSpec:
        return from_parameters(cls, parameters)

    def to_parameters(self) -> dict[str, Any]:
        return to_parameters(self)


def _base(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    t = np.arange(spec.length)
    phase = rng.uniform(0, 2 * np.pi, size=(spec.channels, 1))
    return spec.amplitude * np.sin(2 * np.pi * t / spec.period + phase), phase


def _inject(
    values: np.ndarray,
    anomaly: AnomalySpec,
    spec: SynthSpec,
    phase: np.ndarray,
    rng: np.random.Generator,
) -> None:
    channels = list(anomaly.channels or range(spec.channels))
    window = slice(anomaly.start, anomaly.end)
    sigma = spec.noise_std
    match anomaly.kind:
        case AnomalyKind.GLOBAL_POINT:
            std = values[channels].std(axis=1, keepdims=True)
            values[channels, window] += anomaly.magnitude * std
        case AnomalyKind.CONTEXTUAL_POINT:
            half = int(spec.period)
            lo, hi = values[channels].min(axis=1), values[channels].max(axis=1)
            for t in range(anomaly.start, anomaly.end):
                local = values[channels, max(0, t - half) : t + half + 1]
                mean = local.mean(axis=1)
                direction = np.where(values[channels, t] >= mean, -1.0, 1.0)
                shift = max(CONTEXTUAL_SIGMAS, anomaly.magnitude) * sigma
                values[channels, t] = np.clip(mean + direction * shift, lo, hi)
        case AnomalyKind.SEASONAL:
            t = np.arange(anomaly.start, anomaly.end)
            period = spec.period * anomaly.magnitude
            phi = phase[channels]
            old = spec.amplitude * np.sin(2 * np.pi * t / spec.period + phi)
            new = spec.amplitude * np.sin(2 * np.pi * t / period + phi)
            values[channels, window] += new - old
        case AnomalyKind.GROUP_POINT:
            t = np.arange(anomaly.start, anomaly.end)
            phi = phase[channels]
            clean = spec.amplitude * np.sin(2 * np.pi * t / spec.period + phi)
            values[channels, window] = clean + rng.normal(
                0.0, anomaly.magnitude * sigma, size=(len(channels), anomaly.duration)
            )
        case AnomalyKind.TREND:
            drift = anomaly.magnitude * sigma * np.arange(1, anomaly.duration + 1)
            values[channels, window] += drift
            # the level reached at the end holds for the rest of the series
            values[channels, anomaly.end :] += drift[-1]


def synth_generate(spec: SynthSpec) -> LabeledSeries:
    """
    Generate the series described by ``spec``

    The same spec always produces the same values.
    """
    rng = np.random.default_rng(spec.seed)
    clean, phase = _base(spec, rng)
    values = clean + rng.normal(0.0, spec.noise_std, size=clean.shape)
    labels = np.zeros(spec.length, dtype=np.int8)
    for anomaly in spec.anomalies:
        _inject(values, anomaly, spec, phase, rng)
        labels[anomaly.start : anomaly.end] = 1
    logger.info(
        "Generated %s x %s series with %s anomalous points",
        spec.channels,
        spec.length,
        int(labels.sum()),
    )
    return LabeledSeries(values=values, labels=labels)
