"""
Multivariate series, normalisation and windowing

A :class:`LabeledSeries` stores values channel-first, ``(C, T)``. Windows handed
to the model are time-first, ``(B, T, C)``.
"""

from __future__ import annotations

import logging
import os
import re
import struct
from collections.abc import Iterator, Sequence
from pathlib import Path

import attrs
import numpy as np
import pandas as pd

from patchad.errors import DataError
from patchad.io import FLOAT_FORMAT, atomic_write

logger = logging.getLogger(__name__)

CONSTANT_STD = 1e-12
"""Channels with a training standard deviation below this are only centred"""

BINARY_MAGIC = b"PADS"
BINARY_VERSION = 1
_BINARY_HEADER = struct.Struct("<4sIIQ")


def _as_values(value) -> np.ndarray:
    array = np.array(value, dtype=float, copy=True)
    if array.ndim == 1:
        array = array[None, :]
    array.flags.writeable = False
    return array


def _as_labels(value) -> np.ndarray | None:
    if value is None:
        return None
    array = np.array(value, copy=True).astype(np.int8)
    array.flags.writeable = False
    return array


@attrs.frozen(eq=False)
class NormalizationStats:
    """Per-channel mean and standard deviation fitted on training data"""

    mean: np.ndarray = attrs.field(converter=lambda v: np.asarray(v, dtype=float))
    std: np.ndarray = attrs.field(converter=lambda v: np.asarray(v, dtype=float))

    @property
    def constant(self) -> np.ndarray:
        return self.std < CONSTANT_STD

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Normalise ``(C, T)`` values; constant channels are centred only"""
        if values.shape[0] != self.mean.shape[0]:
            raise DataError(
                f"expected {self.mean.shape[0]} channels, got {values.shape[0]}"
            )
        scale = np.where(self.constant, 1.0, self.std)
        return (values - self.mean[:, None]) / scale[:, None]

    def to_parameters(self) -> dict[str, list[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_parameters(cls, parameters) -> NormalizationStats:
        return cls(mean=parameters["mean"], std=parameters["std"])


@attrs.frozen(eq=False)
class LabeledSeries:
    """
    A multivariate series with optional point labels

    Attributes
    ----------
    values
        ``(C, T)`` read-only float array
    labels
        Optional ``(T,)`` array of zeros and ones
    channel_names
        One name per channel
    stats
        Statistics the values were normalised with, if any
    """

    values: np.ndarray = attrs.field(converter=_as_values)
    labels: np.ndarray | None = attrs.field(default=None, converter=_as_labels)
    channel_names: tuple[str, ...] = attrs.field(converter=tuple)
    stats: NormalizationStats | None = None

    @channel_names.default
    def _default_names(self) -> tuple[str, ...]:
        return tuple(f"ch{i}" for i in range(self.values.shape[0]))

    def __attrs_post_init__(self) -> None:
        if self.values.ndim != 2:  # noqa: PLR2004
            raise DataError(f"values must be (C, T), got shape {self.values.shape}")
        if len(self.channel_names) != self.channels:
            raise DataError(
                f"{len(self.channel_names)} channel names for {self.channels} channels"
            )
        if self.labels is not None:
            if self.labels.shape != (self.length,):
                raise DataError(
                    f"labels have shape {self.labels.shape}, expected ({self.length},)"
                )
            if not np.isin(self.labels, (0, 1)).all():
                raise DataError("labels must be 0 or 1")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def to_frame(self, label_column: str = "label") -> pd.DataFrame:
        """One row per timestamp, one column per channel, plus the labels"""
        frame = pd.DataFrame(self.values.T, columns=list(self.channel_names))
        if self.labels is not None:
            frame[label_column] = self.labels.astype(int)
        return frame


def _parse_float(cell: str) -> float:
    # float() is correctly rounded
    try:
        return float(cell)
    except ValueError:
        return np.nan


def load_csv(
    path: str | os.PathLike[str], label_column: str | None = None
) -> LabeledSeries:
    """
    Read a rectangular numeric CSV with a header row

    Every column becomes a channel except ``label_column``, which becomes the
    labels.

    Raises
    ------
    DataError
        The file is missing, ragged, holds a non-numeric cell or lacks the
        label column. Row numbers count the header as row 1.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError as exc:
        raise DataError(f"data file not found: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: file is empty") from exc
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        where = f" at row {match.group(1)}" if match else ""
        raise DataError(f"{path}: ragged rows{where}: {exc}") from exc

    if label_column is not None and label_column not in frame.columns:
        raise DataError(f"{path}: label column {label_column!r} not found")

    numeric = frame.map(_parse_float)
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raise DataError(
            f"{path}: row {row + 2}, column {frame.columns[col]!r}: "
            f"not a number: {frame.iat[row, col]!r}"
        )

    labels = None
    if label_column is not None:
        labels = numeric.pop(label_column).to_numpy()
        if not np.isin(labels, (0, 1)).all():
            raise DataError(f"{path}: label column {label_column!r} must hold 0 or 1")
    if numeric.shape[1] == 0:
        raise DataError(f"{path}: no value columns")
    logger.info(
        "Loaded %s: %s channels, %s rows", path, numeric.shape[1], numeric.shape[0]
    )
    return LabeledSeries(
        values=numeric.to_numpy(dtype=float).T,
        labels=labels,
        channel_names=tuple(str(c) for c in numeric.columns),
    )


def save_series(
    path: str | os.PathLike[str], series: LabeledSeries, label_column: str = "label"
) -> None:
    """Write a series as CSV atomically, 17 significant digits per value"""
    with atomic_write(path) as fh:
        series.to_frame(label_column).to_csv(
            fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )


def save_binary(path: str | os.PathLike[str], series: LabeledSeries) -> None:
    """
    Write the little-endian ``PADS`` format

    Magic, u32 version, u32 channels, u64 length, the ``(C, T)`` float64 values
    row-major, a u8 label flag and the labels as u8 when the flag is set.
    """
    with atomic_write(path, "wb") as fh:
        header = _BINARY_HEADER.pack(
            BINARY_MAGIC, BINARY_VERSION, series.channels, series.length
        )
        fh.write(header)
        fh.write(series.values.astype("<f8").tobytes(order="C"))
        if series.labels is None:
            fh.write(b"\x00")
        else:
            fh.write(b"\x01")
            fh.write(series.labels.astype(np.uint8).tobytes())


def load_binary(path: str | os.PathLike[str]) -> LabeledSeries:
    """
    Read a file written by :func:`save_binary`

    Raises
    ------
    DataError
        Bad magic or version, or the file is truncated
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    if len(raw) < _BINARY_HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, channels, length = _BINARY_HEADER.unpack_from(raw)
    if magic != BINARY_MAGIC:
        raise DataError(f"{path}: not a PADS file (magic {magic!r})")
    if version != BINARY_VERSION:
        raise DataError(f"{path}: unsupported PADS version {version}")

    offset = _BINARY_HEADER.size
    size = channels * length * 8
    if len(raw) < offset + size + 1:
        raise DataError(f"{path}: truncated values")
    values = np.frombuffer(raw, dtype="<f8", count=channels * length, offset=offset)
    offset += size
    labels = None
    if raw[offset]:
        offset += 1
        if len(raw) < offset + length:
            raise DataError(f"{path}: truncated labels")
        labels = np.frombuffer(raw, dtype=np.uint8, count=length, offset=offset)
    return LabeledSeries(values=values.reshape(channels, length), labels=labels)


def zscore_fit(train: LabeledSeries) -> NormalizationStats:
    """Per-channel mean and population standard deviation of ``train``"""
    stats = NormalizationStats(
        mean=train.values.mean(axis=1), std=train.values.std(axis=1)
    )
    for name in np.asarray(train.channel_names)[stats.constant]:
        logger.warning(
            "Channel %s is constant in the training data, centring only", name
        )
    return stats


def normalize(series: LabeledSeries, stats: NormalizationStats) -> LabeledSeries:
    return attrs.evolve(series, values=stats.apply(series.values), stats=stats)


def zscore_fit_apply(
    train: LabeledSeries, others: Sequence[LabeledSeries] = ()
) -> tuple[LabeledSeries, list[LabeledSeries]]:
    """
    Fit statistics on ``train`` alone and normalise ``train`` and ``others``

    Returns
    -------
        The normalised training series and the normalised ``others``
    """
    stats = zscore_fit(train)
    return normalize(train, stats), [normalize(s, stats) for s in others]


def window_starts(
    length: int, window: int, stride: int, cover_tail: bool = False
) -> np.ndarray:
    """
    Start offsets of contiguous windows

    With ``cover_tail`` a final right-aligned window is appended when the
    strided windows leave a remainder uncovered.

    Raises
    ------
    DataError
        ``window`` is longer than the series or ``stride`` is not positive
    """
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    if window > length:
        raise DataError(
            f"series of length {length} is shorter than the window {window}"
        )
    starts = np.arange(0, length - window + 1, stride)
    if cover_tail and starts[-1] + window < length:
        starts = np.append(starts, length - window)
    return starts


@attrs.frozen(eq=False)
class WindowBatch:
    """``(B, T, C)`` windows and the offset each starts at"""

    starts: np.ndarray
    windows: np.ndarray


def make_windows(
    series: LabeledSeries | np.ndarray,
    window: int,
    stride: int | None = None,
    batch_size: int | None = None,
    cover_tail: bool = False,
) -> Iterator[WindowBatch]:
    """
    Yield batches of windows in order of their start offset

    Parameters
    ----------
    series
        A series or a ``(C, T)`` array
    window
        Window length ``T``
    stride
        Offset between consecutive windows, defaults to ``window``
    batch_size
        Windows per batch, all windows in one batch if not given
    cover_tail
        Add a right-aligned window over any trailing remainder
    """
    values = series.values if isinstance(series, LabeledSeries) else np.asarray(series)
    starts = window_starts(values.shape[1], window, stride or window, cover_tail)
    batch_size = batch_size or len(starts)
    for begin in range(0, len(starts), batch_size):
        chosen = starts[begin : begin + batch_size]
        yield WindowBatch(starts=chosen, windows=gather_windows(values, chosen, window))


def gather_windows(values: np.ndarray, starts: np.ndarray, window: int) -> np.ndarray:
    """
    Copy the windows beginning at ``starts`` out of ``(C, T)`` values as
    ``(B, T, C)``
    """
    view = np.lib.stride_tricks.sliding_window_view(values.T, window, axis=0)
    # view is (T - window + 1, C, window)
    return np.ascontiguousarray(view[np.asarray(starts)].transpose(0, 2, 1))
