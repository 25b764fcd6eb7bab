"""
Adam optimiser without weight decay
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import attrs
import numpy as np

from patchad.autograd import Parameter
from patchad.errors import NumericError, ShapeError

logger = logging.getLogger(__name__)


@attrs.define
class AdamState:
    """
    Moments and step counter for a list of parameters

    ``first_moment[i]`` and ``second_moment[i]`` track parameter ``i``.
    """

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = attrs.field(default=1e-4, validator=attrs.validators.gt(0))
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_parameters(
        cls, params: Sequence[Parameter], learning_rate: float = 1e-4
    ) -> AdamState:
        return cls(
            first_moment=[np.zeros_like(p.data) for p in params],
            second_moment=[np.zeros_like(p.data) for p in params],
            learning_rate=learning_rate,
        )


def adam_step(
    params: Sequence[Parameter],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
) -> None:
    """
    Apply one bias-corrected Adam update in place

    Missing gradients count as zero. The update is abandoned before any
    parameter changes if a gradient contains NaN.

    Raises
    ------
    NumericError
        A gradient contains NaN
    ShapeError
        A gradient or moment does not match its parameter
    """
    if not len(params) == len(grads) == len(state.first_moment):
        raise ShapeError(
            f"{len(params)} parameters, {len(grads)} gradients and "
            f"{len(state.first_moment)} moments"
        )
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.shape or state.first_moment[i].shape != p.shape:
            raise ShapeError(f"gradient {g.shape} does not match parameter {p.shape}")
        if np.isnan(g).any():
            raise NumericError(f"NaN in gradient of parameter {i} with shape {p.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        m = state.first_moment[i] = b1 * state.first_moment[i] + (1.0 - b1) * g
        v = state.second_moment[i] = b2 * state.second_moment[i] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    logger.debug("Adam step %s", t)


class Adam:
    """Adam bound to a fixed list of parameters"""

    def __init__(self, params: Sequence[Parameter], learning_rate: float = 1e-4):
        self.params = list(params)
        self.state = AdamState.for_parameters(self.params, learning_rate)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)
