"""
File output helpers and the score CSV format

Score files have the header ``timestamp,score,flag,threshold`` and one row per
timestamp. Floats are written with 17 significant digits so a read gives back
the exact values.
"""

from __future__ import annotations

import contextlib
import logging
import os
import tempfile
from collections.abc import Iterator
from pathlib import Path
from typing import IO

import numpy as np
import pandas as pd

from patchad.errors import DataError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SCORE_COLUMNS = ("timestamp", "score", "flag", "threshold")


@contextlib.contextmanager
def atomic_write(
    path: str | os.PathLike[str], mode: str = "w"
) -> Iterator[IO]:
    """
    Write to a temporary file next to ``path`` and rename it into place

    Readers see either the previous file or the complete new one. The
    temporary file is removed if the block raises.

    Raises
    ------
    DataError
        The file cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(
            dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
        )
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from exc

    encoding = None if "b" in mode else "utf-8"
    newline = None if "b" in mode else ""
    try:
        with os.fdopen(fd, mode, encoding=encoding, newline=newline) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        _discard(tmp)
        raise DataError(f"cannot write {path}: {exc.strerror}") from exc
    except BaseException:
        _discard(tmp)
        raise
    logger.debug("Wrote %s", path)


def _discard(tmp: str) -> None:
    with contextlib.suppress(FileNotFoundError):
        os.unlink(tmp)


def save_scores(
    path: str | os.PathLike[str],
    scores: np.ndarray,
    flags: np.ndarray | None = None,
    threshold: float | np.ndarray = np.nan,
) -> None:
    """
    Write a score CSV atomically

    Parameters
    ----------
    path
        Target file
    scores
        One score per timestamp
    flags
        Binary anomaly decisions, all zero if not given
    threshold
        A single threshold or one per timestamp (SPOT)
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    flags = np.zeros(n, dtype=int) if flags is None else np.asarray(flags, dtype=int)
    thresholds = np.broadcast_to(np.asarray(threshold, dtype=float), (n,))
    if flags.shape != (n,):
        raise DataError(f"{n} scores but {flags.shape[0]} flags")

    frame = pd.DataFrame(
        {
            "timestamp": np.arange(n),
            "score": scores,
            "flag": flags,
            "threshold": thresholds,
        },
        columns=list(SCORE_COLUMNS),
    )
    with atomic_write(path) as fh:
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def load_scores(path: str | os.PathLike[str]) -> pd.DataFrame:
    """
    Read a score CSV written by :func:`save_scores`

    Raises
    ------
    DataError
        The file is missing or its header is not the score header
    """
    path = Path(path)
    try:
        frame = pd.read_csv(
            path,
            dtype={"timestamp": int, "flag": int},
            float_precision="round_trip",
        )
    except FileNotFoundError as exc:
        raise DataError(f"score file not found: {path}") from exc
    except (ValueError, pd.errors.ParserError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if tuple(frame.columns) != SCORE_COLUMNS:
        raise DataError(
            f"{path}: expected columns {','.join(SCORE_COLUMNS)}, "
            f"got {','.join(map(str, frame.columns))}"
        )
    return frame
