"""
Binary checkpoints of a trained model

Layout, little-endian throughout:

* magic ``PADC`` and a u32 format version
* u32 length and a UTF-8 JSON header holding the model config and the
  normalisation statistics
* the 32-byte SHA-256 of the canonical config JSON
* u32 parameter count, then per parameter: u32 name length, the name, u32
  rank, u64 per dimension, u64 element count and the float64 values

Parameters are written in the model's discovery order, so saving a loaded
model reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from pathlib import Path

import attrs
import numpy as np

from patchad.data import NormalizationStats
from patchad.errors import CheckpointError, PatchADError, ShapeError
from patchad.io import atomic_write
from patchad.model import ModelConfig, PatchADModel

logger = logging.getLogger(__name__)

MAGIC = b"PADC"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@attrs.frozen
class Checkpoint:
    """A model together with the statistics its inputs must be normalised with"""

    model: PatchADModel
    stats: NormalizationStats | None = None


def config_hash(config: ModelConfig) -> bytes:
    """SHA-256 of the config serialised with sorted keys"""
    canonical = json.dumps(
        config.to_parameters(), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).digest()


def _encode(model: PatchADModel, stats: NormalizationStats | None) -> bytes:
    header = {
        "config": model.config.to_parameters(),
        "normalization": None if stats is None else stats.to_parameters(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    parts = [
        MAGIC,
        _U32.pack(FORMAT_VERSION),
        _U32.pack(len(header_bytes)),
        header_bytes,
        config_hash(model.config),
    ]
    named = list(model.named_parameters())
    parts.append(_U32.pack(len(named)))
    for name, p in named:
        encoded = name.encode("utf-8")
        parts += [_U32.pack(len(encoded)), encoded, _U32.pack(p.ndim)]
        parts += [_U64.pack(dim) for dim in p.shape]
        parts += [_U64.pack(p.size), p.data.astype("<f8").tobytes(order="C")]
    return b"".join(parts)


def save_checkpoint(
    path: str | os.PathLike[str],
    model: PatchADModel,
    stats: NormalizationStats | None = None,
) -> None:
    """Write ``model`` (and optional normalisation ``stats``) atomically"""
    with atomic_write(path, "wb") as fh:
        fh.write(_encode(model, stats))
    logger.info("Saved checkpoint %s", path)


class _Reader:
    def __init__(self, raw: bytes, path: Path):
        self.raw = raw
        self.path = path
        self.offset = 0

    def take(self, size: int, section: str) -> bytes:
        if self.offset + size > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated {section}")
        chunk = self.raw[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self, section: str) -> int:
        return _U32.unpack(self.take(_U32.size, section))[0]

    def u64(self, section: str) -> int:
        return _U64.unpack(self.take(_U64.size, section))[0]


def load_checkpoint(
    path: str | os.PathLike[str], model: PatchADModel | None = None
) -> Checkpoint:
    """
    Read a checkpoint

    Parameters
    ----------
    path
        File written by :func:`save_checkpoint`
    model
        Load into this model instead of building one from the stored config

    Raises
    ------
    CheckpointError
        The file is missing, corrupt or truncated (the message names the
        section), or ``model`` was built from a different config
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    reader = _Reader(raw, path)

    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a PADC checkpoint")
    version = reader.u32("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")

    header_bytes = reader.take(reader.u32("header length"), "header")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
        config = ModelConfig.from_parameters(header["config"])
        stats = (
            None
            if header["normalization"] is None
            else NormalizationStats.from_parameters(header["normalization"])
        )
    except (
        UnicodeDecodeError,
        json.JSONDecodeError,
        KeyError,
        TypeError,
        PatchADError,
    ) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    stored_hash = reader.take(32, "config hash")
    if stored_hash != config_hash(config):
        raise CheckpointError(f"{path}: config hash does not match the header")

    if model is None:
        model = PatchADModel(config)
    elif model.config != config:
        raise CheckpointError(
            f"{path}: config mismatch, checkpoint has {config.to_parameters()} "
            f"but the model has {model.config.to_parameters()}"
        )

    state: dict[str, np.ndarray] = {}
    for _ in range(reader.u32("parameter count")):
        name_length = reader.u32("parameter name")
        name = reader.take(name_length, "parameter name").decode("utf-8")
        rank = reader.u32(f"rank of {name}")
        shape = tuple(reader.u64(f"shape of {name}") for _ in range(rank))
        count = reader.u64(f"size of {name}")
        if count != int(np.prod(shape)):
            raise CheckpointError(f"{path}: size of {name} does not match its shape")
        values = np.frombuffer(reader.take(8 * count, f"values of {name}"), dtype="<f8")
        state[name] = values.reshape(shape)
    if reader.offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after the parameters")

    try:
        model.load_state_dict(state)
    except ShapeError as exc:
        raise CheckpointError(
            f"{path}: parameters do not fit the model: {exc}"
        ) from exc
    logger.info("Loaded checkpoint %s", path)
    return Checkpoint(model=model, stats=stats)
