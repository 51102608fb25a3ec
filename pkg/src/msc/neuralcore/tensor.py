"""A small reverse-mode autodiff engine over float64 numpy arrays.

Every op returns a new Tensor that remembers its parents and a closure that
pushes the output gradient back into them. ``backward`` walks the graph in
reverse topological order. Ops only exist for what the model needs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from msc import NumericalError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.data

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite value produced by {op}")
    return data


def _node(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(_check(data, op))
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out.name = op
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))
    return _node(a.data + b.data, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))
    return _node(a.data - b.data, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))
    return _node(a.data * b.data, (a, b), back, "mul")


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., k) and a 2-D ``b`` of shape (k, m)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if b.data.ndim != 2:
        raise ValueError("matmul expects a 2-D right operand")

    def back(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            k = a.shape[-1]
            b._accumulate(a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1]))
    return _node(a.data @ b.data, (a, b), back, "matmul")


def affine(x, w, b) -> Tensor:
    return add(matmul(x, w), b)


def tensor_sum(a) -> Tensor:
    a = _as_tensor(a)

    def back(g):
        a._accumulate(np.broadcast_to(g, a.shape))
    return _node(np.asarray(a.data.sum()), (a,), back, "sum")


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    s = sigmoid_np(a.data)

    def back(g):
        a._accumulate(g * s * (1.0 - s))
    return _node(s, (a,), back, "sigmoid")


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    t = np.tanh(a.data)

    def back(g):
        a._accumulate(g * (1.0 - t * t))
    return _node(t, (a,), back, "tanh")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    axis = axis % tensors[0].data.ndim
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def back(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])
    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, back, "concat")


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _as_tensor(a)

    def back(g):
        a._accumulate(g.reshape(a.shape))
    return _node(a.data.reshape(shape), (a,), back, "reshape")


def take(table, index) -> Tensor:
    """Rows of a 2-D ``table`` gathered by an integer array of any shape.

    Output shape is ``index.shape + (table.shape[1],)``; the backward pass
    scatter-adds, so repeated indices accumulate.
    """
    table = _as_tensor(table)
    index = np.asarray(index, dtype=np.int64)
    if table.data.ndim != 2:
        raise ValueError("take expects a 2-D table")

    def back(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, index.ravel(), g.reshape(-1, table.shape[1]))
        table._accumulate(acc)
    return _node(table.data[index], (table,), back, "take")


def bce_loss(x, y, w=None, eps: float = 1e-12) -> Tensor:
    """Mean weighted binary cross-entropy of probabilities ``x`` against 0/1 ``y``.

    ``l_n = -w_n [y_n log x_n + (1 - y_n) log(1 - x_n)]`` with ``x`` clamped
    to ``[eps, 1 - eps]``; the clamp passes no gradient where it binds.
    """
    x = _as_tensor(x)
    y = np.asarray(y, dtype=np.float64)
    wn = np.ones_like(y) if w is None else np.broadcast_to(np.asarray(w, dtype=np.float64), y.shape)
    xc = np.clip(x.data, eps, 1.0 - eps)
    n = y.size
    loss = -(wn * (y * np.log(xc) + (1.0 - y) * np.log(1.0 - xc))).sum() / n

    def back(g):
        inside = (x.data > eps) & (x.data < 1.0 - eps)
        d = -wn * (y / xc - (1.0 - y) / (1.0 - xc)) / n
        x._accumulate(g * d * inside)
    return _node(np.asarray(loss), (x,), back, "bce")


def median_rows(x, counts) -> Tensor:
    """Per-column median over the first ``counts[b]`` rows of ``x[:, b, :]``.

    ``x`` has shape (P, B, C); the result is (B, C). Even counts average the
    two middle order statistics, and the gradient is routed to them.
    """
    x = _as_tensor(x)
    counts = np.asarray(counts, dtype=np.int64)
    P, B, C = x.shape
    if np.any(counts < 1) or np.any(counts > P):
        raise ValueError("median needs between 1 and P rows per column")
    out = np.empty((B, C))
    picks = []
    for b in range(B):
        k = int(counts[b])
        block = x.data[:k, b, :]
        order = np.argsort(block, axis=0, kind="stable")
        lo, hi = order[(k - 1) // 2], order[k // 2]
        cols = np.arange(C)
        out[b] = 0.5 * (block[lo, cols] + block[hi, cols])
        picks.append((lo, hi))

    def back(g):
        acc = np.zeros_like(x.data)
        cols = np.arange(C)
        for b, (lo, hi) in enumerate(picks):
            np.add.at(acc[:, b, :], (lo, cols), 0.5 * g[b])
            np.add.at(acc[:, b, :], (hi, cols), 0.5 * g[b])
        x._accumulate(acc)
    return _node(out, (x,), back, "median")


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor reachable from scalar ``loss``."""
    if loss.data.size != 1:
        raise ValueError("backward needs a scalar output")
    if loss._backward is None:
        raise RuntimeError("no recorded forward graph: loss does not depend on any trainable tensor")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    # intermediate nodes keep their gradient only until it has been pushed on
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            node.grad = None
