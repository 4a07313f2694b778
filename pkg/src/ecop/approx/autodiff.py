"""A small reverse-mode differentiation engine over numpy arrays.

Only the operations the policy, critic and loss code need are provided.
Non-smooth points use one fixed subgradient: ``relu`` and ``clip`` pass
zero gradient exactly at their kinks, and ``minimum``/``maximum`` route a
tie to their first argument.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_grad_fns")
    __array_priority__ = 100.0

    def __init__(self, value, requires_grad: bool = False, _parents=(), _grad_fns=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._grad_fns = _grad_fns

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.value)

    def backward(self, seed=None) -> None:
        order = []
        seen = set()
        stack = [(self, False)]
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
        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(order):
            g = node.grad
            if g is None:
                continue
            for parent, fn in zip(node._parents, node._grad_fns):
                if not parent.requires_grad:
                    continue
                contrib = fn(g)
                parent.grad = contrib if parent.grad is None else parent.grad + contrib

    # arithmetic ---------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_var(other)))

    def __rsub__(self, other):
        return add(as_var(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_var(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return vsum(self, axis)

    def mean(self, axis=None):
        return vmean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _node(value, parents, grad_fns) -> Var:
    req = any(p.requires_grad for p in parents)
    if not req:
        return Var(value)
    return Var(value, True, tuple(parents), tuple(grad_fns))


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _node(a.value + b.value, (a, b),
                 (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)))


def neg(a: Var) -> Var:
    return _node(-a.value, (a,), (lambda g: -g,))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _node(a.value * b.value, (a, b),
                 (lambda g: _unbroadcast(g * b.value, a.shape),
                  lambda g: _unbroadcast(g * a.value, b.shape)))


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value / b.value
    return _node(out, (a, b),
                 (lambda g: _unbroadcast(g / b.value, a.shape),
                  lambda g: _unbroadcast(-g * out / b.value, b.shape)))


def square(a: Var) -> Var:
    return _node(a.value ** 2, (a,), (lambda g: 2.0 * g * a.value,))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _node(a.value @ b.value, (a, b),
                 (lambda g: g @ b.value.T, lambda g: a.value.T @ g))


def exp(a: Var) -> Var:
    out = np.exp(a.value)
    return _node(out, (a,), (lambda g: g * out,))


def log(a: Var) -> Var:
    return _node(np.log(a.value), (a,), (lambda g: g / a.value,))


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)
    return _node(out, (a,), (lambda g: g * (1.0 - out ** 2),))


def relu(a: Var) -> Var:
    a = as_var(a)
    mask = a.value > 0
    return _node(np.where(mask, a.value, 0.0), (a,), (lambda g: g * mask,))


def clip(a: Var, lo: float, hi: float) -> Var:
    mask = (a.value > lo) & (a.value < hi)
    return _node(np.clip(a.value, lo, hi), (a,), (lambda g: g * mask,))


def minimum(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    take_a = a.value <= b.value
    return _node(np.where(take_a, a.value, b.value), (a, b),
                 (lambda g: _unbroadcast(g * take_a, a.shape),
                  lambda g: _unbroadcast(g * ~take_a, b.shape)))


def maximum(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    take_a = a.value >= b.value
    return _node(np.where(take_a, a.value, b.value), (a, b),
                 (lambda g: _unbroadcast(g * take_a, a.shape),
                  lambda g: _unbroadcast(g * ~take_a, b.shape)))


def vsum(a: Var, axis=None) -> Var:
    shape = a.shape

    def grad(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return _node(a.value.sum(axis=axis), (a,), (grad,))


def vmean(a: Var, axis=None) -> Var:
    n = a.value.size if axis is None else a.shape[axis]
    return vsum(a, axis) * (1.0 / n)


def reshape(a: Var, shape) -> Var:
    old = a.shape
    return _node(a.value.reshape(shape), (a,), (lambda g: g.reshape(old),))


def _scatter_add(shape, idx, g) -> np.ndarray:
    # bincount is much faster than np.add.at for pure integer-array indexing
    if isinstance(idx, tuple) and idx and all(
            isinstance(i, np.ndarray) and i.dtype.kind in "iu" for i in idx):
        lead = shape[:len(idx)]
        trail = int(np.prod(shape[len(idx):], dtype=np.int64))
        # forward indexing already rejected out-of-range entries, so wrap only maps negatives
        flat = np.ravel_multi_index(np.broadcast_arrays(*idx), lead, mode="wrap").ravel()
        cells = (flat[:, None] * trail + np.arange(trail)).ravel()
        size = int(np.prod(lead, dtype=np.int64)) * trail
        return np.bincount(cells, np.asarray(g, dtype=np.float64).ravel(), minlength=size).reshape(shape)
    out = np.zeros(shape)
    np.add.at(out, idx, g)
    return out


def getitem(a: Var, idx) -> Var:
    shape = a.shape

    def grad(g):
        return _scatter_add(shape, idx, g)

    return _node(a.value[idx], (a,), (grad,))


def log_softmax(a: Var, axis: int = -1) -> Var:
    z = a.value - a.value.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    p = np.exp(out)
    return _node(out, (a,), (lambda g: g - p * g.sum(axis=axis, keepdims=True),))


def take_along_last(a: Var, idx: np.ndarray) -> Var:
    """``a[i, idx[i]]`` for a 2-D ``a``."""
    rows = np.arange(a.shape[0])
    return getitem(a, (rows, np.asarray(idx, dtype=np.int64)))


def concat(parts, axis: int = -1) -> Var:
    parts = [as_var(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def make(k):
        def grad(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[k], bounds[k + 1])
            return g[tuple(sl)]
        return grad

    return _node(np.concatenate([p.value for p in parts], axis=axis), parts,
                 [make(k) for k in range(len(parts))])


def value_and_grad(fn, x: np.ndarray):
    """Evaluate scalar ``fn(Var)`` and its gradient with respect to ``x``."""
    leaf = Var(np.array(x, dtype=np.float64), requires_grad=True)
    out = fn(leaf)
    if out.value.shape != ():
        raise ValueError("value_and_grad needs a scalar output")
    if not out.requires_grad:
        return float(out.value), np.zeros_like(leaf.value)
    out.backward()
    g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
    return float(out.value), g
