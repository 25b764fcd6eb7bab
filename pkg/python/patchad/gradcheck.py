"""
Finite-difference gradient checking

Contrastive terms built on :func:`~patchad.autograd.stop_gradient` are
semi-gradients: perturbing a parameter also moves the detached operand, so a
plain central difference measures a different quantity than ``backward``.
:func:`frozen_detach` records every detached value on a reference pass and
replays it on perturbed passes, which makes the two comparable.
"""

from __future__ import annotations

import contextlib
from collections.abc import Callable, Iterator, Sequence

import attrs
import numpy as np

from patchad.autograd import Parameter, Tensor, backward, detach_hook


class _DetachRecorder:
    def __init__(self) -> None:
        self.values: list[np.ndarray] = []
        self.replaying = False
        self.position = 0

    def __call__(self, data: np.ndarray) -> np.ndarray:
        if not self.replaying:
            self.values.append(data.copy())
            return data.copy()
        value = self.values[self.position]
        self.position += 1
        return value.copy()

    def rewind(self) -> None:
        self.replaying = True
        self.position = 0


@contextlib.contextmanager
def frozen_detach() -> Iterator[_DetachRecorder]:
    """
    Freeze detached values at those of the first evaluation in the block

    Call ``rewind()`` on the yielded recorder before every evaluation after
    the first.
    """
    recorder = _DetachRecorder()
    with detach_hook(recorder):
        yield recorder


@attrs.frozen
class GradCheckResult:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def error(self) -> float:
        return abs(self.analytic - self.numeric) / max(1.0, abs(self.analytic))


def numerical_grad(
    fn: Callable[[], Tensor], param: Parameter, index: tuple[int, ...], eps: float
) -> float:
    """Central difference of ``fn`` with respect to one entry of ``param``"""
    original = param.data[index]
    param.data[index] = original + eps
    upper = fn().item()
    param.data[index] = original - eps
    lower = fn().item()
    param.data[index] = original
    return (upper - lower) / (2.0 * eps)


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[tuple[str, Parameter]],
    eps: float = 1e-5,
    freeze_detached: bool = True,
    max_entries: int | None = None,
    seed: int = 0,
) -> list[GradCheckResult]:
    """
    Compare ``backward`` against central differences

    Parameters
    ----------
    fn
        Builds the scalar loss from the current parameter values
    params
        Named parameters to check
    eps
        Finite-difference step
    freeze_detached
        Replay detached values from the reference pass on perturbed passes
    max_entries
        Check at most this many randomly chosen entries per parameter
    seed
        Seed for choosing the entries

    Returns
    -------
        One result per checked entry
    """
    rng = np.random.default_rng(seed)
    results: list[GradCheckResult] = []
    with contextlib.ExitStack() as stack:
        recorder = stack.enter_context(frozen_detach()) if freeze_detached else None
        for _, p in params:
            p.zero_grad()
        loss = fn()
        backward(loss)

        def evaluate() -> Tensor:
            if recorder is not None:
                recorder.rewind()
            return fn()

        for name, p in params:
            grad = np.zeros_like(p.data) if p.grad is None else p.grad
            indices = list(np.ndindex(p.shape))
            if max_entries is not None and len(indices) > max_entries:
                chosen = rng.choice(len(indices), size=max_entries, replace=False)
                indices = [indices[i] for i in sorted(chosen)]
            for index in indices:
                numeric = numerical_grad(evaluate, p, index, eps)
                results.append(
                    GradCheckResult(
                        name=name,
                        index=index,
                        analytic=float(grad[index]),
                        numeric=numeric,
                    )
                )
    return results
