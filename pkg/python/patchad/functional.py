"""
Composite tensor functions used by the network and its objective
"""

from __future__ import annotations

from enum import Enum

from patchad.autograd import GELU, ReLU, Tensor, softmax
from patchad.errors import ConfigError

__all__ = ["Activation", "activation", "gelu", "layer_norm", "mse", "relu", "softmax"]

LAYER_NORM_EPS = 1e-5


class Activation(str, Enum):
    """Non-linearity applied between the two fully-connected layers of a mixer"""

    RELU = "relu"
    GELU = "gelu"


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def gelu(x: Tensor) -> Tensor:
    """GELU with the tanh approximation ``0.5x(1+tanh(sqrt(2/pi)(x+0.044715x^3)))``"""
    return GELU.apply(x)


def activation(x: Tensor, kind: Activation | str) -> Tensor:
    try:
        kind = Activation(kind)
    except ValueError as exc:
        raise ConfigError(f"unknown activation {kind!r}") from exc
    if kind is Activation.RELU:
        return relu(x)
    return gelu(x)


def layer_norm(
    x: Tensor,
    scale: Tensor | None = None,
    shift: Tensor | None = None,
    eps: float = LAYER_NORM_EPS,
) -> Tensor:
    """
    Normalise the last axis to zero mean and unit variance

    The variance uses denominator ``n``. ``scale`` and ``shift`` are applied
    afterwards when given; a constant slice maps onto ``shift``.
    """
    centred = x - x.mean(axis=-1, keepdims=True)
    variance = (centred * centred).mean(axis=-1, keepdims=True)
    out = centred * (variance + eps) ** -0.5
    if scale is not None:
        out = out * scale
    if shift is not None:
        out = out + shift
    return out


def mse(prediction: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over every element"""
    diff = prediction - target
    return (diff * diff).mean()
