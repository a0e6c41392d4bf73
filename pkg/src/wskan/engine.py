"""Minimal reverse-mode autodiff over numpy float64 arrays.

Each operation records its parents and a closure producing parent
gradients from the upstream gradient; backward() walks the tape in
reverse topological order.  Gradients accumulate into .grad on leaf
tensors created with param(); intermediate gradients stay internal to
the backward pass, so repeated backward calls never double-count.

The op set is exactly what the weight-space models need: dense algebra,
silu/sigmoid/exp/log/softplus/logsumexp, concat/reshape, row gather and
segment-sum scatter for message passing, dropout, and reductions.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "param",
    "constant",
    "backward",
    "zero_grads",
    "add",
    "sub",
    "neg",
    "mul",
    "matmul",
    "silu",
    "sigmoid",
    "exp",
    "log",
    "softplus",
    "logsumexp",
    "concat",
    "reshape",
    "gather_rows",
    "scatter_sum",
    "dropout",
    "sum_",
    "mean_",
]


class Tensor:
    """A node in the computation tape."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def needs_grad(self) -> bool:
        return self.requires_grad or bool(self.parents)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, leaf={not self.parents})"


def param(value) -> Tensor:
    """A leaf tensor whose gradient accumulates across backward calls."""
    return Tensor(value, requires_grad=True)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, backward_fn) -> Tensor:
    t = Tensor(value)
    t.parents = tuple(parents)
    t.backward_fn = backward_fn
    return t


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum an upstream gradient down to a broadcast operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(root: Tensor, seed=None) -> None:
    """Accumulate d<seed, root>/dparam into .grad of every reachable param leaf."""
    if seed is None:
        seed = np.ones_like(root.value)
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != root.value.shape:
        raise ValueError(f"seed shape {seed.shape} does not match output shape {root.value.shape}")
    # iterative topological order over the tape
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited and p.needs_grad:
                stack.append((p, False))
    grads: dict[int, np.ndarray] = {id(root): seed}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.value)
            node.grad += g
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.needs_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] += pg
            else:
                grads[id(parent)] = pg


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _node(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _node(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)))


def neg(a) -> Tensor:
    a = _wrap(a)
    return _node(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _node(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.value.shape),
                            _unbroadcast(g * a.value, b.value.shape)))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got {a.value.shape} @ {b.value.shape}")
    return _node(a.value @ b.value, (a, b),
                 lambda g: (g @ b.value.T, a.value.T @ g))


def silu(a) -> Tensor:
    a = _wrap(a)
    s = expit(a.value)
    return _node(a.value * s, (a,), lambda g: (g * (s * (1.0 + a.value * (1.0 - s))),))


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    s = expit(a.value)
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp(a) -> Tensor:
    a = _wrap(a)
    e = np.exp(a.value)
    return _node(e, (a,), lambda g: (g * e,))


def log(a) -> Tensor:
    a = _wrap(a)
    return _node(np.log(a.value), (a,), lambda g: (g / a.value,))


def softplus(a) -> Tensor:
    a = _wrap(a)
    v = np.maximum(a.value, 0.0) + np.log1p(np.exp(-np.abs(a.value)))
    return _node(v, (a,), lambda g: (g * expit(a.value),))


def logsumexp(a, axis: int) -> Tensor:
    a = _wrap(a)
    hi = np.max(a.value, axis=axis, keepdims=True)
    v = np.log(np.sum(np.exp(a.value - hi), axis=axis, keepdims=True)) + hi
    soft = np.exp(a.value - v)
    return _node(np.squeeze(v, axis=axis), (a,),
                 lambda g: (np.expand_dims(g, axis) * soft,))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.value for t in tensors], axis=axis), tensors, bw)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old = a.value.shape
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def gather_rows(a, idx) -> Tensor:
    """Select rows: out[i] = a[idx[i]]; repeated indices sum in the backward."""
    a = _wrap(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("gather_rows expects a 1-d index array")

    def bw(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.value[idx], (a,), bw)


def scatter_sum(a, idx, n_rows: int) -> Tensor:
    """Segment sum: out[j] = sum over i with idx[i] == j of a[i].

    Rows are added in ascending input order, so the reduction order is
    fixed for a fixed idx array.
    """
    a = _wrap(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1 or len(idx) != a.value.shape[0]:
        raise ValueError("scatter_sum index must be 1-d and match the number of rows")
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise ValueError("scatter_sum index out of range")
    out = np.zeros((n_rows,) + a.value.shape[1:], dtype=np.float64)
    np.add.at(out, idx, a.value)
    return _node(out, (a,), lambda g: (g[idx],))


def dropout(a, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    a = _wrap(a)
    if not training or rate == 0.0:
        return _node(a.value, (a,), lambda g: (g,))
    mask = (rng.random(a.value.shape) >= rate) / (1.0 - rate)
    return _node(a.value * mask, (a,), lambda g: (g * mask,))


def sum_(a, axis=None) -> Tensor:
    a = _wrap(a)
    shape = a.value.shape

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _node(a.value.sum(axis=axis), (a,), bw)


def mean_(a, axis=None) -> Tensor:
    a = _wrap(a)
    shape = a.value.shape
    count = a.value.size if axis is None else shape[axis]

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g / count, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / count, shape).copy(),)

    return _node(a.value.mean(axis=axis), (a,), bw)
