"""Minimal reverse-mode automatic differentiation over numpy arrays.

Each :class:`Tensor` records its parents and one vector-Jacobian product per
parent. ``backward`` walks the graph in reverse topological order and
accumulates ``.grad`` on every tensor that requires it. Only the operations
the grounding model needs are provided.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "name")
    __array_priority__ = 100.0

    def __init__(self, value, requires_grad: bool = False,
                 parents: Sequence[tuple["Tensor", Callable[[np.ndarray], np.ndarray]]] = (),
                 name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)
        # keep only parents through which a gradient can flow
        self._parents = tuple((p, f) for p, f in parents if p.requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def backward(self, seed: np.ndarray | float = 1.0) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable tensor."""
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p, _ in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.broadcast_to(
            np.asarray(seed, dtype=np.float64), self.value.shape).copy()}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = np.array(g) if node.grad is None else node.grad + g
                continue
            for p, vjp in node._parents:
                pg = vjp(g)
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor(a.value + b.value, parents=(
        (a, lambda g: _unbroadcast(g, sa)),
        (b, lambda g: _unbroadcast(g, sb)),
    ))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor(a.value - b.value, parents=(
        (a, lambda g: _unbroadcast(g, sa)),
        (b, lambda g: -_unbroadcast(g, sb)),
    ))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(-a.value, parents=((a, lambda g: -g),))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return Tensor(av * bv, parents=(
        (a, lambda g: _unbroadcast(g * bv, av.shape)),
        (b, lambda g: _unbroadcast(g * av, bv.shape)),
    ))


def matmul(a, b) -> Tensor:
    """``a @ b`` for a of rank 1..3 and b of rank 2."""
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if bv.ndim != 2:
        raise ValueError("right operand must be a matrix")

    def grad_b(g):
        a2 = av.reshape(-1, av.shape[-1])
        return a2.T @ g.reshape(-1, g.shape[-1])

    return Tensor(av @ bv, parents=(
        (a, lambda g: g @ bv.T),
        (b, grad_b),
    ))


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return Tensor(a.value.sum(), parents=((a, lambda g: np.broadcast_to(g, shape).copy()),))


def add_n(items: Iterable) -> Tensor:
    """Sum of several same-shape tensors as a single tape node."""
    items = [as_tensor(x) for x in items]
    if not items:
        raise ValueError("add_n of nothing")
    total = items[0].value.copy()
    for t in items[1:]:
        total = total + t.value
    return Tensor(total, parents=tuple((t, lambda g, s=t.shape: _unbroadcast(g, s)) for t in items))


def mean_rows(a, idx: Sequence[int]) -> Tensor:
    """Mean of the rows ``a[idx]``; repeated indices count repeatedly."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("mean over an empty row set")
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g / idx.size)
        return out

    return Tensor(a.value[idx].mean(axis=0), parents=((a, vjp),))


def getitem(a, key) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, key, g)
        return out

    return Tensor(a.value[key], parents=((a, vjp),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return Tensor(a.value.reshape(shape), parents=((a, lambda g: g.reshape(old)),))


def concat_last(a, b) -> Tensor:
    """Concatenate along the last axis (leading shapes must agree)."""
    a, b = as_tensor(a), as_tensor(b)
    k = a.shape[-1]
    return Tensor(np.concatenate([a.value, b.value], axis=-1), parents=(
        (a, lambda g: g[..., :k]),
        (b, lambda g: g[..., k:]),
    ))


def l2_normalize(a) -> Tensor:
    """Normalize along the last axis; zero vectors map to zero with zero gradient."""
    a = as_tensor(a)
    v = a.value
    norm = np.sqrt((v * v).sum(axis=-1, keepdims=True))
    safe = np.where(norm > 0.0, norm, 1.0)
    u = np.where(norm > 0.0, v / safe, 0.0)

    def vjp(g):
        proj = (g * u).sum(axis=-1, keepdims=True)
        return np.where(norm > 0.0, (g - u * proj) / safe, 0.0)

    return Tensor(u, parents=((a, vjp),))


def logsumexp(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    v = a.value
    m = v.max(axis=axis, keepdims=True)
    e = np.exp(v - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.log(s) + m
    soft = e / s
    if axis is None:
        return Tensor(out.reshape(()), parents=((a, lambda g: g * soft),))
    return Tensor(np.squeeze(out, axis=axis), parents=(
        (a, lambda g: np.expand_dims(g, axis) * soft),
    ))


def log_softmax(a, ndim: int | None = None) -> Tensor:
    """Log-softmax normalized jointly over the last ``ndim`` axes (all axes if None)."""
    a = as_tensor(a)
    v = a.value
    axes = None if ndim is None else tuple(range(v.ndim - ndim, v.ndim))
    m = v.max(axis=axes, keepdims=True)
    shifted = v - m
    lse = np.log(np.exp(shifted).sum(axis=axes, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)
    return Tensor(out, parents=((a, lambda g: g - soft * g.sum(axis=axes, keepdims=True)),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return Tensor(out, parents=((a, lambda g: g * out),))


def log(a) -> Tensor:
    a = as_tensor(a)
    v = a.value
    return Tensor(np.log(v), parents=((a, lambda g: g / v),))


def dot_vec(a, w) -> Tensor:
    """Contract the last axis of ``a`` with the vector ``w``."""
    a, w = as_tensor(a), as_tensor(w)
    av, wv = a.value, w.value
    return Tensor(av @ wv, parents=(
        (a, lambda g: np.multiply.outer(g, wv)),
        (w, lambda g: np.tensordot(g, av, axes=g.ndim)
            if g.ndim else g * av),
    ))
