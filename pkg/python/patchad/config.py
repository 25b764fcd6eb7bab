"""
Building configuration objects from plain mappings

Configuration classes are frozen ``attrs`` classes. They are created from JSON
mappings with :func:`from_parameters`, which refuses unknown keys so that a
typo in a config file fails loudly instead of silently using a default.
"""

from __future__ import annotations

import enum
import json
import os
from collections.abc import Mapping
from pathlib import Path
from typing import Any, TypeVar

import attrs

from patchad.errors import ConfigError

T = TypeVar("T")

SEED_ENV_VAR = "PATCHAD_SEED"


def from_parameters(
    cls: type[T],
    parameters: Mapping[str, Any],
    nested: Mapping[str, type] | None = None,
) -> T:
    """
    Build an attrs class from a mapping of field values

    Parameters
    ----------
    cls
        Frozen attrs class to build
    parameters
        Field values keyed by field name
    nested
        Fields whose value is itself a mapping for another attrs class

    Raises
    ------
    ConfigError
        ``parameters`` is not a mapping, has unknown or missing fields, or a
        value fails validation
    """
    if not isinstance(parameters, Mapping):
        raise ConfigError(
            f"{cls.__name__} parameters must be a mapping, "
            f"got {type(parameters).__name__}"
        )
    fields = {f.name: f for f in attrs.fields(cls)}
    unknown = sorted(set(parameters) - set(fields))
    if unknown:
        raise ConfigError(f"unknown field(s) for {cls.__name__}: {', '.join(unknown)}")
    missing = sorted(
        name
        for name, f in fields.items()
        if f.default is attrs.NOTHING and name not in parameters
    )
    if missing:
        raise ConfigError(f"missing field(s) for {cls.__name__}: {', '.join(missing)}")

    values = dict(parameters)
    for name, nested_cls in (nested or {}).items():
        if name in values and not isinstance(values[name], nested_cls):
            values[name] = nested_cls.from_parameters(values[name])
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def _serialise(_inst: Any, _field: Any, value: Any) -> Any:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, tuple):
        return list(value)
    return value


def to_parameters(obj: Any) -> dict[str, Any]:
    """Plain JSON-serialisable mapping of every field, defaults included"""
    return attrs.asdict(obj, value_serializer=_serialise)


def load_json(path: str | os.PathLike[str]) -> dict[str, Any]:
    """
    Read a JSON object from ``path``

    Raises
    ------
    ConfigError
        The file is missing, is not valid JSON or does not hold an object
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return value


def resolve_seed(flag: int | None, configured: int | None, default: int = 0) -> int:
    """
    Pick the seed by precedence: flag, environment, config, default

    Raises
    ------
    ConfigError
        The environment variable is not an integer
    """
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got {env!r}"
            ) from exc
    if configured is not None:
        return configured
    return default


def positive(_inst: Any, attribute: attrs.Attribute, value: Any) -> None:
    """attrs validator: value must be >= 1"""
    if value < 1:
        raise ConfigError(f"{attribute.name} must be >= 1, got {value}")


def unit_interval(_inst: Any, attribute: attrs.Attribute, value: Any) -> None:
    """attrs validator: value must lie in [0, 1]"""
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{attribute.name} must lie in [0, 1], got {value}")
