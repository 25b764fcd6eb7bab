"""
Building blocks with learnable parameters

Modules register parameters and child modules as plain attributes. Parameter
discovery walks attributes in assignment order, so the order of
:meth:`Module.named_parameters` is deterministic and a module referenced from
several places is visited once.
"""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from patchad import functional as F
from patchad.autograd import Parameter, Tensor, matmul
from patchad.errors import ShapeError


def he_normal(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]):
    """Normal initialisation with standard deviation ``sqrt(2 / fan_in)``"""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Module:
    """Base class for anything holding parameters"""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        seen: set[int] = set()
        yield from self._walk(prefix, seen)

    def _walk(self, prefix: str, seen: set[int]) -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            yield from _walk_value(f"{prefix}{name}", value, seen)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        """Copy of every parameter keyed by name, in discovery order"""
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """
        Overwrite parameter values in place

        Raises
        ------
        ShapeError
            Names or shapes differ from this module's parameters
        """
        named = dict(self.named_parameters())
        if list(named) != list(state):
            missing = sorted(set(named) - set(state))
            unexpected = sorted(set(state) - set(named))
            raise ShapeError(
                f"parameter names differ: missing {missing}, unexpected {unexpected}"
            )
        for name, value in state.items():
            if named[name].shape != np.shape(value):
                raise ShapeError(
                    f"{name}: expected shape {named[name].shape}, got {np.shape(value)}"
                )
        for name, value in state.items():
            named[name].data[...] = value


def _walk_value(name: str, value, seen: set[int]) -> Iterator[tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        if id(value) not in seen:
            seen.add(id(value))
            yield name, value
    elif isinstance(value, Module):
        if id(value) not in seen:
            seen.add(id(value))
            yield from value._walk(f"{name}.", seen)
    elif isinstance(value, list | tuple):
        for i, item in enumerate(value):
            yield from _walk_value(f"{name}.{i}", item, seen)


class Linear(Module):
    """
    Fully-connected layer ``x @ weight + bias`` over the last axis

    Weights are He-initialised, biases start at zero.
    """

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(
            he_normal(rng, in_features, (in_features, out_features))
        )
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias


class LayerNorm(Module):
    """Layer normalisation over the last axis with a learnable affine map"""

    def __init__(self, features: int):
        self.scale = Parameter(np.ones(features))
        self.shift = Parameter(np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.scale, self.shift)
