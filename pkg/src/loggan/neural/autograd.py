"""A small reverse-mode automatic differentiation engine over numpy arrays.

Every operation returns a new :class:`Tensor` holding its value and, when
gradients are being recorded, a closure that pushes the output gradient to
its inputs. ``Tensor.backward`` walks the recorded graph in reverse
topological order. Values are checked for NaN/Inf after every operation.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Sequence

import numpy as np

DTYPE = np.float32

# per-thread, so schemes training in parallel threads do not switch each other's recording off
_state = threading.local()


class NumericalError(ArithmeticError):
    """Raised when an operation produces a non-finite value."""


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = "", dtype=None):
        if dtype is None:
            dtype = data.dtype if isinstance(data, (np.ndarray, np.floating)) and data.dtype.kind == "f" else DTYPE
        arr = np.asarray(data, dtype=dtype)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{', grad' if self.requires_grad else ''})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _needs_grad(parent):
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return mul(self, 1.0 / other if not isinstance(other, Tensor) else reciprocal(other))
    def __neg__(self): return mul(self, -1.0)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims: bool = False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if id(p) not in visited and _needs_grad(p):
                stack.append((p, False))
    return order


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericalError("non-finite value produced")
    out = Tensor(data)
    if is_grad_enabled() and any(_needs_grad(p) for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ------------------------------------------------------------------ elementwise

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return _result(out, (a,), lambda g: (-g * out * out,))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    b = as_tensor(b)
    return as_tensor(a, b), b


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(a)) without overflow."""
    x = a.data
    out = (np.minimum(x, 0) - np.log1p(np.exp(-np.abs(x)))).astype(x.dtype)
    s = _stable_sigmoid(-x)
    return _result(out, (a,), lambda g: (g * s,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)
    return _result(out, (a,), lambda g: (g * inside,))


# ------------------------------------------------------------------ reductions / shapes

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _result(np.asarray(out, dtype=a.dtype), (a,), back)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / float(n))


def reshape(a: Tensor, shape) -> Tensor:
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a: Tensor, idx) -> Tensor:
    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)
    return _result(a.data[idx], (a,), back)


def stack(ts: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = list(ts)
    out = np.stack([t.data for t in ts], axis=axis)

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))
    return _result(out, ts, back)


def concat(ts: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = list(ts)
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def back(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(ts)))
    return _result(out, ts, back)


def split_last(a: Tensor, n: int) -> list[Tensor]:
    """Split the last axis into ``n`` equal chunks."""
    w = a.shape[-1] // n
    return [a[..., i * w:(i + 1) * w] for i in range(n)]


# ------------------------------------------------------------------ linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)
    out = a.data @ b.data

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if a.data.ndim == 2:
            gb = a.data.T @ g
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))
    return _result(out, (a, b), back)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)
    return _result(table.data[ids], (table,), back)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)
    return _result(out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)
    return _result(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def pick(a: Tensor, ids: np.ndarray) -> Tensor:
    """``a[..., ids]`` along the last axis, one index per leading position."""
    ids = np.asarray(ids)[..., None]
    out = np.take_along_axis(a.data, ids, axis=-1)[..., 0]

    def back(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, ids, g[..., None], axis=-1)
        return (full,)
    return _result(out, (a,), back)


def softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)
