"""
Dense tensors with reverse-mode automatic differentiation

A :class:`Tensor` wraps a 64-bit numpy array. Every differentiable operation is
a :class:`Function` whose ``apply`` records the parents on the output, so that
:func:`backward` can sweep the graph in reverse topological order.

Gradients accumulate into leaves; callers zero them between optimiser steps.
"""

from __future__ import annotations

import contextlib
import logging
from collections.abc import Callable, Iterator, Sequence
from contextvars import ContextVar
from typing import Any

import numpy as np
import numpy.typing as npt

from patchad.errors import ShapeError

logger = logging.getLogger(__name__)

DTYPE = np.float64

_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)
_flop_counter: ContextVar[list[int] | None] = ContextVar("flop_counter", default=None)
_detach_hook: ContextVar[Callable[[np.ndarray], np.ndarray] | None] = ContextVar(
    "detach_hook", default=None
)

ArrayLike = npt.ArrayLike


class Tensor:
    """
    N-dimensional float array with optional gradient tracking

    Parameters
    ----------
    data
        Values, converted to a contiguous float64 array
    requires_grad
        Whether gradients should be accumulated for this tensor
    """

    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _ctx: Function | None = None,
    ):
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._ctx = _ctx

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def item(self) -> float:
        """Return the value of a single-element tensor as a float"""
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """Return a copy of the values"""
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def detach(self) -> Tensor:
        return stop_gradient(self)

    # Arithmetic
    def __add__(self, other: Any) -> Tensor:
        return Add.apply(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return Add.apply(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return Sub.apply(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return Sub.apply(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return Mul.apply(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return Mul.apply(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        return Div.apply(self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        return Div.apply(other, self)

    def __neg__(self) -> Tensor:
        return Neg.apply(self)

    def __pow__(self, exponent: float) -> Tensor:
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other: Any) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return GetItem.apply(self, index=index)

    # Reductions and shape manipulation
    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False):
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False):
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], tuple | list):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=tuple(shape))

    def transpose_dim(self, axis: int) -> Tensor:
        return transpose_dim(self, axis)

    def permute(self, *axes: int) -> Tensor:
        return Permute.apply(self, axes=tuple(axes))

    def exp(self) -> Tensor:
        return Exp.apply(self)

    def log(self) -> Tensor:
        return Log.apply(self)

    def tanh(self) -> Tensor:
        return Tanh.apply(self)

    def relu(self) -> Tensor:
        return ReLU.apply(self)


class Parameter(Tensor):
    """A leaf tensor that is always tracked for gradients"""

    def __init__(self, data: ArrayLike):
        super().__init__(data, requires_grad=True)

    def __repr__(self) -> str:
        return f"Parameter(shape={self.shape})"


def as_tensor(value: Any) -> Tensor:
    """Wrap ``value`` in a constant tensor unless it already is one"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate operations without recording them for backpropagation"""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@contextlib.contextmanager
def count_flops() -> Iterator[list[int]]:
    """
    Count floating point operations of every matmul evaluated in the block

    Each product of an ``m x k`` and a ``k x n`` matrix adds ``2 * m * n * k``.
    The running total is the single element of the yielded list.
    """
    counter = [0]
    token = _flop_counter.set(counter)
    try:
        yield counter
    finally:
        _flop_counter.reset(token)


@contextlib.contextmanager
def detach_hook(hook: Callable[[np.ndarray], np.ndarray]) -> Iterator[None]:
    """Route the values produced by :func:`stop_gradient` through ``hook``"""
    token = _detach_hook.set(hook)
    try:
        yield
    finally:
        _detach_hook.reset(token)


class Function:
    """
    A differentiable operation

    Subclasses implement ``forward`` on raw arrays and ``backward`` returning one
    gradient per parent (``None`` for parents that need none).
    """

    parents: tuple[Tensor, ...]
    saved: tuple[Any, ...]
    kwargs: dict[str, Any]

    @classmethod
    def apply(cls, *args: Any, **kwargs: Any) -> Tensor:
        ctx = cls()
        ctx.parents = tuple(as_tensor(arg) for arg in args)
        ctx.saved = ()
        ctx.kwargs = kwargs
        out = ctx.forward(*(p.data for p in ctx.parents), **kwargs)
        requires_grad = is_grad_enabled() and any(p.requires_grad for p in ctx.parents)
        return Tensor(
            out, requires_grad=requires_grad, _ctx=ctx if requires_grad else None
        )

    def save(self, *values: Any) -> None:
        self.saved = values

    def forward(self, *args: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Add(Function):
    def forward(self, a, b):
        self.save(a.shape, b.shape)
        return a + b

    def backward(self, grad):
        sa, sb = self.saved
        return unbroadcast(grad, sa), unbroadcast(grad, sb)


class Sub(Function):
    def forward(self, a, b):
        self.save(a.shape, b.shape)
        return a - b

    def backward(self, grad):
        sa, sb = self.saved
        return unbroadcast(grad, sa), unbroadcast(-grad, sb)


class Mul(Function):
    def forward(self, a, b):
        self.save(a, b)
        return a * b

    def backward(self, grad):
        a, b = self.saved
        return unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)


class Div(Function):
    def forward(self, a, b):
        self.save(a, b)
        return a / b

    def backward(self, grad):
        a, b = self.saved
        return (
            unbroadcast(grad / b, a.shape),
            unbroadcast(-grad * a / (b * b), b.shape),
        )


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    def forward(self, a, exponent: float):
        self.save(a, exponent)
        return a**exponent

    def backward(self, grad):
        a, exponent = self.saved
        return (grad * exponent * a ** (exponent - 1.0),)


class Exp(Function):
    def forward(self, a):
        out = np.exp(a)
        self.save(out)
        return out

    def backward(self, grad):
        (out,) = self.saved
        return (grad * out,)


class Log(Function):
    def forward(self, a):
        self.save(a)
        return np.log(a)

    def backward(self, grad):
        (a,) = self.saved
        return (grad / a,)


class Tanh(Function):
    def forward(self, a):
        out = np.tanh(a)
        self.save(out)
        return out

    def backward(self, grad):
        (out,) = self.saved
        return (grad * (1.0 - out * out),)


class ReLU(Function):
    def forward(self, a):
        self.save(a > 0)
        return np.maximum(a, 0.0)

    def backward(self, grad):
        (mask,) = self.saved
        return (grad * mask,)


_GELU_C = np.sqrt(2.0 / np.pi)


class GELU(Function):
    """Tanh approximation of the Gaussian error linear unit"""

    def forward(self, a):
        inner = _GELU_C * (a + 0.044715 * a**3)
        t = np.tanh(inner)
        self.save(a, t)
        return 0.5 * a * (1.0 + t)

    def backward(self, grad):
        a, t = self.saved
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * a * a)
        return (grad * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * d_inner),)


class ClipMin(Function):
    def forward(self, a, minimum: float):
        self.save(a > minimum)
        return np.maximum(a, minimum)

    def backward(self, grad):
        (mask,) = self.saved
        return (grad * mask,)


class Softmax(Function):
    def forward(self, a, axis: int):
        shifted = a - a.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)
        self.save(out, axis)
        return out

    def backward(self, grad):
        out, axis = self.saved
        inner = (grad * out).sum(axis=axis, keepdims=True)
        return (out * (grad - inner),)


def _normalise_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


class Sum(Function):
    def forward(self, a, axis, keepdims: bool):
        self.save(a.shape, _normalise_axes(axis, a.ndim), keepdims)
        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        shape, axes, keepdims = self.saved
        if not keepdims:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad, shape).copy(),)


class Mean(Function):
    def forward(self, a, axis, keepdims: bool):
        axes = _normalise_axes(axis, a.ndim)
        count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
        self.save(a.shape, axes, keepdims, count)
        return np.mean(a, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        shape, axes, keepdims, count = self.saved
        if not keepdims:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad, shape) / count,)


class Reshape(Function):
    def forward(self, a, shape: tuple[int, ...]):
        self.save(a.shape)
        try:
            return a.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"cannot reshape {a.shape} into {shape}") from exc

    def backward(self, grad):
        (shape,) = self.saved
        return (grad.reshape(shape),)


class Permute(Function):
    def forward(self, a, axes: tuple[int, ...]):
        if sorted(axes) != list(range(a.ndim)):
            raise ShapeError(f"axes {axes} are not a permutation for shape {a.shape}")
        self.save(np.argsort(axes))
        return np.transpose(a, axes)

    def backward(self, grad):
        (inverse,) = self.saved
        return (np.transpose(grad, inverse),)


class SwapAxes(Function):
    def forward(self, a, axis1: int, axis2: int):
        self.save(axis1, axis2)
        return np.swapaxes(a, axis1, axis2)

    def backward(self, grad):
        axis1, axis2 = self.saved
        return (np.swapaxes(grad, axis1, axis2),)


class GetItem(Function):
    def forward(self, a, index):
        self.save(a.shape, index)
        return a[index]

    def backward(self, grad):
        shape, index = self.saved
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, index, grad)
        return (out,)


class RepeatInterleave(Function):
    def forward(self, a, repeats: int, axis: int):
        axis = axis % a.ndim
        self.save(a.shape, repeats, axis)
        return np.repeat(a, repeats, axis=axis)

    def backward(self, grad):
        shape, repeats, axis = self.saved
        split = (*shape[:axis], shape[axis], repeats, *shape[axis + 1 :])
        return (grad.reshape(split).sum(axis=axis + 1),)


class Tile(Function):
    def forward(self, a, reps: int, axis: int):
        axis = axis % a.ndim
        self.save(a.shape, reps, axis)
        tiling = [1] * a.ndim
        tiling[axis] = reps
        return np.tile(a, tiling)

    def backward(self, grad):
        shape, reps, axis = self.saved
        split = (*shape[:axis], reps, shape[axis], *shape[axis + 1 :])
        return (grad.reshape(split).sum(axis=axis),)


class MatMul(Function):
    def forward(self, a, b):
        self.save(a, b)
        out = np.matmul(a, b)
        counter = _flop_counter.get()
        if counter is not None:
            m, k = a.shape[-2:]
            n = b.shape[-1]
            batch = int(np.prod(out.shape[:-2])) if out.ndim > 2 else 1  # noqa: PLR2004
            counter[0] += 2 * batch * m * n * k
        return out

    def backward(self, grad):
        a, b = self.saved
        grad_a = np.matmul(grad, np.swapaxes(b, -1, -2))
        grad_b = np.matmul(np.swapaxes(a, -1, -2), grad)
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)


def matmul(a: Any, b: Any) -> Tensor:
    """
    Batched matrix product ``a[..., m, k] @ b[..., k, n]``

    Raises
    ------
    ShapeError
        The inner dimensions differ or an operand has fewer than two axes
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:  # noqa: PLR2004
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return MatMul.apply(a, b)


def transpose_dim(x: Tensor, axis: int) -> Tensor:
    """
    Swap ``axis`` with the last axis

    Applying the same swap twice restores ``x``.
    """
    if not 0 <= axis < x.ndim:
        raise ShapeError(f"axis {axis} is out of range for rank {x.ndim}")
    if axis == x.ndim - 1:
        return x
    return SwapAxes.apply(x, axis1=axis, axis2=x.ndim - 1)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def flatten_last2(x: Tensor) -> Tensor:
    """Merge the last two axes into one"""
    return reshape(x, (*x.shape[:-2], x.shape[-2] * x.shape[-1]))


def repeat_interleave(x: Tensor, repeats: int, axis: int) -> Tensor:
    """Repeat every slice along ``axis`` ``repeats`` consecutive times"""
    return RepeatInterleave.apply(x, repeats=repeats, axis=axis)


def tile(x: Tensor, reps: int, axis: int) -> Tensor:
    """Concatenate ``reps`` copies of ``x`` along ``axis``"""
    return Tile.apply(x, reps=reps, axis=axis)


def clip_min(x: Tensor, minimum: float) -> Tensor:
    return ClipMin.apply(x, minimum=minimum)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` computed with max-subtraction"""
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} is out of range for rank {x.ndim}")
    return Softmax.apply(x, axis=axis)


def stop_gradient(x: Tensor) -> Tensor:
    """
    Return a value-identical tensor that is detached from the graph

    Nothing upstream of the result receives gradient through it.
    """
    hook = _detach_hook.get()
    data = x.data.copy() if hook is None else hook(x.data)
    return Tensor(data, requires_grad=False)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in reversed(node._ctx.parents):
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(leaf) into ``grad`` of every reachable tracked leaf

    Intermediate tensors have their ``grad`` set to the gradient flowing through
    them; leaves accumulate, so zero them between optimiser steps.

    Raises
    ------
    ShapeError
        ``loss`` is not a single element
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        node.grad = grad
        ctx = node._ctx
        for parent, parent_grad in zip(ctx.parents, ctx.backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = np.asarray(parent_grad, dtype=DTYPE)
