"""Minimal reverse-mode gradient engine on numpy arrays.

A ``Tensor`` records the operation that produced it; calling ``backward()`` on
a scalar result walks the graph in reverse topological order and accumulates
gradients. Only the operations the training stack actually needs are
implemented. Dtype follows the input arrays, so the same graph code runs in
float32 for training and float64 for finite-difference checks.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class GradientError(RuntimeError):
    """Raised when a gradient is requested that the graph cannot provide."""


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_vjp")

    def __init__(
        self,
        data,
        parents: tuple["Tensor", ...] = (),
        vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._vjp = vjp

    # -- graph bookkeeping ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        """A leaf sharing this tensor's data; gradients stop here."""
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def _toposort(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return order

    def backward_collect(self, seed: float = 1.0) -> dict[int, np.ndarray]:
        """Run reverse mode and return ``{id(tensor): grad}`` without touching
        ``.grad`` anywhere. Safe to call from worker threads on private graphs
        that only read shared leaf data."""
        if self.data.size != 1:
            raise GradientError("backward requires a scalar loss")
        grads: dict[int, np.ndarray] = {
            id(self): np.full_like(self.data, seed, dtype=self.data.dtype)
        }
        for node in reversed(self._toposort()):
            g = grads.get(id(node))
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None:
                    continue
                pid = id(parent)
                if pid in grads:
                    grads[pid] = grads[pid] + pg
                else:
                    grads[pid] = pg
        return grads

    def backward(self, seed: float = 1.0) -> None:
        """Accumulate gradients into ``.grad`` of every tensor in the graph.

        ``.grad`` adds across calls (per-batch accumulation); reset with
        ``zero_grads`` or by setting ``.grad = None``.
        """
        grads = self.backward_collect(seed)
        for node in self._toposort():
            g = grads.get(id(node))
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return mul(_wrap(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other, self.dtype))

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# -- elementwise -------------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out, (a, b), vjp)


def sub(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor(out, (a, b), vjp)


def mul(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return Tensor(out, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    pos = a.data > 0
    out = np.where(pos, a.data, slope * a.data)

    def vjp(g):
        return (np.where(pos, g, slope * g),)

    return Tensor(out, (a,), vjp)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor(out, (a,), lambda g: (g * 0.5 / out,))


# -- linear algebra / reshaping ---------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor(out, (a, b), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor) -> Tensor:
    return Tensor(a.data.T, (a,), lambda g: (g.T,))


def permute(a: Tensor, axes: Sequence[int]) -> Tensor:
    inv = tuple(np.argsort(axes))
    return Tensor(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out, tuple(tensors), vjp)


def getitem(a: Tensor, key) -> Tensor:
    """Basic indexing only (ints and slices); use take_rows for index arrays."""
    out = a.data[key]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[key] += g
        return (full,)

    return Tensor(out, (a,), vjp)


def take_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows of a 2-D tensor; duplicate indices are allowed."""
    index = np.asarray(index, dtype=np.intp)
    out = a.data[index]

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor(out, (a,), vjp)


def flip_rows(a: Tensor) -> Tensor:
    out = a.data[::-1].copy()
    return Tensor(out, (a,), lambda g: (g[::-1].copy(),))


def row_substitute(a: Tensor, index: np.ndarray, row: Tensor) -> Tensor:
    """Copy of ``a`` with the rows at ``index`` replaced by ``row``."""
    index = np.asarray(index, dtype=np.intp)
    out = a.data.copy()
    out[index] = row.data

    def vjp(g):
        ga = g.copy()
        ga[index] = 0.0
        return ga, g[index].sum(axis=0)

    return Tensor(out, (a, row), vjp)


# -- reductions --------------------------------------------------------------


def tsum(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    return Tensor(out, (a,), vjp)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return tsum(a, axis) * (1.0 / n)


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    shifted = np.exp(a.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(total), axis=axis)

    def vjp(g):
        soft = shifted / total
        return (np.expand_dims(g, axis) * soft,)

    return Tensor(out, (a,), vjp)
