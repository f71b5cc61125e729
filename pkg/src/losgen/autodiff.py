"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Usage::

    with GradientTape() as tape:
        loss = mean(square(matmul(x, w) - y))
    (dw,) = tape.gradient(loss, [w])

Operations executed while a tape is active are recorded only when at least
one input requires a gradient (a parameter, or something computed from one).
The tape is a plain list in execution order, so the backward sweep is simply
its reverse.
"""

from __future__ import annotations

import contextvars
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GradientTape",
    "backward",
    "as_tensor",
    "matmul",
    "linear",
    "add",
    "mul",
    "exp",
    "log",
    "square",
    "relu",
    "tanh",
    "sigmoid",
    "softplus",
    "softmax_groups",
    "log_softmax_groups",
    "sum",
    "mean",
    "concat",
    "columns",
]

_ACTIVE: contextvars.ContextVar["GradientTape | None"] = contextvars.ContextVar(
    "losgen_active_tape", default=None
)


class Tensor:
    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradientTape:
    """Records differentiable operations while used as a context manager."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._outputs: set[int] = set()
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self._nodes)

    def _record(self, out, inputs, vjp):
        self._nodes.append((out, inputs, vjp))
        self._outputs.add(id(out))

    def gradient(self, loss: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradients of the scalar ``loss`` with respect to each of ``sources``."""
        if loss.data.size != 1:
            raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
        if id(loss) not in self._outputs and not any(loss is s for s in sources):
            raise ValueError("loss was not recorded on this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, vjp in reversed(self._nodes):
            g = grads.get(id(out))
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        return [
            np.array(grads[id(s)], dtype=np.float64) if id(s) in grads else np.zeros_like(s.data)
            for s in sources
        ]


def backward(tape: GradientTape, loss: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
    return tape.gradient(loss, sources)


def _emit(data, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    out = Tensor(data)
    tape = _ACTIVE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._record(out, inputs, vjp)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementary operations -------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        return (g @ b.data.T if need_a else None, a.data.T @ g if need_b else None)

    return _emit(a.data @ b.data, (a, b), vjp)


def linear(x, weight, bias) -> Tensor:
    """Affine map ``x @ weight.T + bias`` with ``weight`` stored as (out, in)."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(
            f"input width mismatch: expected {weight.shape[1]}, got {x.shape[-1]}"
        )

    need_x, need_w, need_b = x.requires_grad, weight.requires_grad, bias.requires_grad

    def vjp(g):
        return (
            g @ weight.data if need_x else None,
            g.T @ x.data if need_w else None,
            g.sum(axis=0) if need_b else None,
        )

    return _emit(x.data @ weight.data.T + bias.data, (x, weight, bias), vjp)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(a.data + b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit(a.data * b.data, (a, b), vjp)


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _emit(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _emit(np.log(a.data), (a,), lambda g: (g / a.data,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _emit(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _emit(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _emit(y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x):
    # numerically stable for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    return _emit(y, (a,), lambda g: (g * y * (1.0 - y),))


def softplus(a) -> Tensor:
    """``log(1 + exp(a))``, stable for large |a|."""
    a = as_tensor(a)
    y = np.logaddexp(0.0, a.data)
    return _emit(y, (a,), lambda g: (g * _sigmoid(a.data),))


def _group_slices(groups, width):
    if groups is None:
        return [slice(0, width)]
    slices, start = [], 0
    for size in groups:
        slices.append(slice(start, start + size))
        start += size
    if start != width:
        raise ValueError(f"group sizes {list(groups)} do not cover width {width}")
    return slices


def _softmax_np(x, slices):
    y = np.empty_like(x)
    for s in slices:
        z = x[..., s] - x[..., s].max(axis=-1, keepdims=True)
        e = np.exp(z)
        y[..., s] = e / e.sum(axis=-1, keepdims=True)
    return y


def softmax_groups(a, groups=None) -> Tensor:
    """Softmax applied independently to consecutive column groups of sizes ``groups``."""
    a = as_tensor(a)
    slices = _group_slices(groups, a.shape[-1])
    y = _softmax_np(a.data, slices)

    def vjp(g):
        out = np.empty_like(g)
        for s in slices:
            gy = g[..., s] * y[..., s]
            out[..., s] = gy - y[..., s] * gy.sum(axis=-1, keepdims=True)
        return (out,)

    return _emit(y, (a,), vjp)


def log_softmax_groups(a, groups=None) -> Tensor:
    a = as_tensor(a)
    slices = _group_slices(groups, a.shape[-1])
    y = np.empty_like(a.data)
    for s in slices:
        z = a.data[..., s] - a.data[..., s].max(axis=-1, keepdims=True)
        y[..., s] = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def vjp(g):
        out = np.empty_like(g)
        for s in slices:
            out[..., s] = g[..., s] - np.exp(y[..., s]) * g[..., s].sum(axis=-1, keepdims=True)
        return (out,)

    return _emit(y, (a,), vjp)


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    y = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _emit(y, (a,), vjp)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / count)


def concat(parts, axis=-1) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    y = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(y, parts, vjp)


def columns(a, start: int, stop: int) -> Tensor:
    """The column slice ``a[:, start:stop]``."""
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        out[..., start:stop] = g
        return (out,)

    return _emit(a.data[..., start:stop], (a,), vjp)
