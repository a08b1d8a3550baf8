"""A small reverse-mode tape over numpy arrays.

Only the handful of ops the networks need are provided; the loss ops are
fused (log-softmax cross-entropy, squared error) so the tape stays short.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, scalar):
        return scale(self, scalar)

    __rmul__ = __mul__

    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() needs a scalar output")
        order = []
        seen = set()

        def visit(node):
            # iterative DFS; unrolled models can get deep
            stack = [(node, False)]
            while stack:
                n, done = stack.pop()
                if done:
                    order.append(n)
                    continue
                if id(n) in seen:
                    continue
                seen.add(id(n))
                stack.append((n, True))
                for p in n.parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        for n in order:
            n.grad = None
        self.grad = np.ones_like(self.value)
        for n in reversed(order):
            if n.backward_fn is not None and n.grad is not None:
                n.backward_fn(n.grad)


def const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def param(x) -> Tensor:
    return Tensor(x, requires_grad=True)


def _acc(t: Tensor, g):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def matmul(a, b) -> Tensor:
    a, b = const(a), const(b)

    def bw(g):
        _acc(a, g @ b.value.T)
        _acc(b, a.value.T @ g)

    return Tensor(a.value @ b.value, (a, b), bw)


def add(a, b) -> Tensor:
    a, b = const(a), const(b)

    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))

    return Tensor(a.value + b.value, (a, b), bw)


def scale(a, s: float) -> Tensor:
    a = const(a)
    return Tensor(a.value * s, (a,), lambda g: _acc(a, g * s))


def tanh(a) -> Tensor:
    a = const(a)
    y = np.tanh(a.value)
    return Tensor(y, (a,), lambda g: _acc(a, g * (1.0 - y * y)))


def concat(parts, axis=-1) -> Tensor:
    parts = [const(p) for p in parts]
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        for p, gp in zip(parts, np.split(g, sizes, axis=axis)):
            _acc(p, gp)

    return Tensor(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), bw)


def take_rows(table, idx) -> Tensor:
    """Embedding lookup ``table[idx]``."""
    table = const(table)
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        if table.requires_grad:
            full = np.zeros_like(table.value)
            np.add.at(full, idx, g)
            _acc(table, full)

    return Tensor(table.value[idx], (table,), bw)


def log_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def weighted_cross_entropy(logits, labels, weights) -> Tensor:
    """sum_i w_i * -log softmax(logits_i)[labels_i]; weights are constants."""
    logits = const(logits)
    labels = np.asarray(labels, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    logp = log_softmax(logits.value)
    rows = np.arange(len(labels))
    nll = -logp[rows, labels]

    def bw(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        _acc(logits, g * w[:, None] * p)

    return Tensor(np.sum(w * nll), (logits,), bw)


def weighted_squared_error(pred, target, weights) -> Tensor:
    """sum_i w_i * 0.5 * (pred_i - target_i)^2 with ``pred`` of shape (N,)."""
    pred = const(pred)
    diff = pred.value - np.asarray(target, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    return Tensor(np.sum(w * 0.5 * diff * diff), (pred,), lambda g: _acc(pred, g * w * diff))


def sum_of_squares(tensors) -> Tensor:
    tensors = list(tensors)

    def bw(g):
        for t in tensors:
            _acc(t, 2.0 * g * t.value)

    return Tensor(sum(float(np.sum(t.value * t.value)) for t in tensors), tuple(tensors), bw)


def squeeze_last(a) -> Tensor:
    a = const(a)
    return Tensor(a.value[..., 0], (a,), lambda g: _acc(a, g[..., None]))


def total(terms) -> Tensor:
    """Sum of scalar tensors."""
    terms = list(terms)

    def bw(g):
        for t in terms:
            _acc(t, g)

    return Tensor(sum(float(t.value) for t in terms), tuple(terms), bw)
