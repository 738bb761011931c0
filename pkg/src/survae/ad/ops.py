"""Differentiable operations over :class:`Node`.

Binary elementwise ops accept matching shapes or a 0-d scalar against any
tensor. Anything else must go through an explicit op (``broadcast_to``,
``affine``, ``gather``) so shape intent stays visible at the call site.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from scipy import special

from .node import DomainError, Node, ShapeError, as_node, make_node

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _unbroadcast_scalar(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def _binary_shapes(op: str, a: Node, b: Node) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise ShapeError(op, a.shape, b.shape)


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _binary_shapes("add", a, b)

    def bw(g):
        return _unbroadcast_scalar(g, a.shape), _unbroadcast_scalar(g, b.shape)

    return make_node(a.value + b.value, (a, b), bw, "add")


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _binary_shapes("sub", a, b)

    def bw(g):
        return _unbroadcast_scalar(g, a.shape), _unbroadcast_scalar(-g, b.shape)

    return make_node(a.value - b.value, (a, b), bw, "sub")


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _binary_shapes("mul", a, b)

    def bw(g):
        return _unbroadcast_scalar(g * b.value, a.shape), _unbroadcast_scalar(g * a.value, b.shape)

    return make_node(a.value * b.value, (a, b), bw, "mul")


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _binary_shapes("div", a, b)
    out = a.value / b.value

    def bw(g):
        return (_unbroadcast_scalar(g / b.value, a.shape),
                _unbroadcast_scalar(-g * out / b.value, b.shape))

    return make_node(out, (a, b), bw, "div")


def neg(a) -> Node:
    a = as_node(a)
    return make_node(-a.value, (a,), lambda g: (-g,), "neg")


def square(a) -> Node:
    a = as_node(a)
    return make_node(a.value * a.value, (a,), lambda g: (2.0 * a.value * g,), "square")


def sqrt(a) -> Node:
    a = as_node(a)
    if np.any(a.value < 0):
        raise DomainError("sqrt", "negative input")
    out = np.sqrt(a.value)
    return make_node(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def exp(a) -> Node:
    a = as_node(a)
    out = np.exp(a.value)
    return make_node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Node:
    """Natural log; 0 maps to -inf, negative input is a domain error."""
    a = as_node(a)
    if np.any(a.value < 0):
        raise DomainError("log", "negative input")
    with np.errstate(divide="ignore"):
        out = np.log(a.value)
    return make_node(out, (a,), lambda g: (g / a.value,), "log")


def tanh(a) -> Node:
    a = as_node(a)
    out = np.tanh(a.value)
    return make_node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Node:
    a = as_node(a)
    mask = a.value > 0
    return make_node(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a) -> Node:
    a = as_node(a)
    out = special.expit(a.value)
    return make_node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a) -> Node:
    a = as_node(a)
    out = np.logaddexp(0.0, a.value)
    return make_node(out, (a,), lambda g: (g * special.expit(a.value),), "softplus")


def log_expm1(a) -> Node:
    """log(exp(a) - 1), the inverse of softplus. Requires a > 0."""
    a = as_node(a)
    if np.any(a.value <= 0):
        raise DomainError("log_expm1", "input must be positive")
    x = a.value
    out = x + np.log(-np.expm1(-x))
    return make_node(out, (a,), lambda g: (g / -np.expm1(-x),), "log_expm1")


def abs(a) -> Node:  # noqa: A001 - mirrors the op name
    a = as_node(a)
    sign = np.where(a.value >= 0, 1.0, -1.0)
    return make_node(np.abs(a.value), (a,), lambda g: (g * sign,), "abs")


def clip(a, lo: float, hi: float) -> Node:
    a = as_node(a)
    mask = (a.value >= lo) & (a.value <= hi)
    return make_node(np.clip(a.value, lo, hi), (a,), lambda g: (g * mask,), "clip")


def log_ndtr(a) -> Node:
    """log of the standard normal CDF."""
    a = as_node(a)
    out = special.log_ndtr(a.value)

    def bw(g):
        # phi(x) / Phi(x), evaluated in log space for the far left tail
        return (g * np.exp(-0.5 * a.value ** 2 - _LOG_SQRT_2PI - out),)

    return make_node(out, (a,), bw, "log_ndtr")


def ndtri(a) -> Node:
    """Inverse of the standard normal CDF on (0, 1)."""
    a = as_node(a)
    if np.any((a.value <= 0) | (a.value >= 1)):
        raise DomainError("ndtri", "input must lie in (0, 1)")
    out = special.ndtri(a.value)
    return make_node(out, (a,), lambda g: (g * np.exp(0.5 * out ** 2 + _LOG_SQRT_2PI),), "ndtri")


def _norm_axis(axis, ndim):
    return axis if axis is None or axis >= 0 else axis + ndim


def sum(a, axis: Optional[int] = None) -> Node:  # noqa: A001
    a = as_node(a)
    axis = _norm_axis(axis, a.ndim)
    out = a.value.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return make_node(out, (a,), bw, "sum")


def mean(a, axis: Optional[int] = None) -> Node:
    a = as_node(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def bw(g):
        return g @ b.value.T, a.value.T @ g

    return make_node(a.value @ b.value, (a, b), bw, "matmul")


def affine(x, w, b) -> Node:
    """x @ w + b with b broadcast over rows; the dense-layer primitive."""
    x, w, b = as_node(x), as_node(w), as_node(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError("affine", x.shape, w.shape, b.shape)

    def bw(g):
        return g @ w.value.T, x.value.T @ g, g.sum(axis=0)

    return make_node(x.value @ w.value + b.value, (x, w, b), bw, "affine")


def reshape(a, shape: Sequence[int]) -> Node:
    a = as_node(a)
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return make_node(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def broadcast_to(a, shape: Sequence[int]) -> Node:
    a = as_node(a)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.value, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, shape) from None
    lead = len(shape) - a.ndim

    def bw(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        keep = tuple(i for i, (s, t) in enumerate(zip(a.shape, g.shape)) if s == 1 and t != 1)
        if keep:
            g = g.sum(axis=keep, keepdims=True)
        return (g,)

    return make_node(out, (a,), bw, "broadcast_to")


def concat(parts: Sequence, axis: int = -1) -> Node:
    parts = [as_node(p) for p in parts]
    try:
        out = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(p.shape for p in parts)) from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(out, parts, bw, "concat")


def split(a, sizes: Sequence[int], axis: int = -1) -> list:
    a = as_node(a)
    if int(np.sum(sizes)) != a.shape[axis]:
        raise ShapeError("split", a.shape, tuple(sizes))
    outs, start = [], 0
    for size in sizes:
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(start, start + size)
        idx = tuple(idx)

        def bw(g, idx=idx):
            full = np.zeros_like(a.value)
            full[idx] = g
            return (full,)

        outs.append(make_node(a.value[idx], (a,), bw, "split"))
        start += size
    return outs


def gather(a, index: np.ndarray, axis: int = -1) -> Node:
    """take_along_axis; gradients scatter-add back into the source."""
    a = as_node(a)
    index = np.asarray(index, dtype=np.intp)
    if index.ndim != a.ndim:
        raise ShapeError("gather", a.shape, index.shape)
    out = np.take_along_axis(a.value, index, axis=axis)

    def bw(g):
        full = np.zeros_like(a.value)
        ax = _norm_axis(axis, a.ndim)
        grids = list(np.indices(index.shape, sparse=True))
        grids[ax] = index
        np.add.at(full, tuple(grids), g)
        return (full,)

    return make_node(out, (a,), bw, "gather")


def scatter(a, index: np.ndarray, size: int, axis: int = -1) -> Node:
    """Place ``a`` into a zero tensor of extent ``size`` along ``axis`` at ``index``.

    Indices along the axis must be distinct per slice (a permutation or a
    subset of one), which makes the backward pass a plain gather.
    """
    a = as_node(a)
    index = np.asarray(index, dtype=np.intp)
    if index.shape != a.shape:
        raise ShapeError("scatter", a.shape, index.shape)
    shape = list(a.shape)
    shape[axis] = size
    out = np.zeros(shape)
    np.put_along_axis(out, index, a.value, axis=axis)
    return make_node(out, (a,), lambda g: (np.take_along_axis(g, index, axis=axis),), "scatter")


def max_along_axis(a, axis: int = -1) -> tuple:
    """Maximum and its index; ties resolve to the lowest index."""
    a = as_node(a)
    idx = np.argmax(a.value, axis=axis)
    idx_k = np.expand_dims(idx, axis)
    out = np.take_along_axis(a.value, idx_k, axis=axis).squeeze(axis)

    def bw(g):
        full = np.zeros_like(a.value)
        np.put_along_axis(full, idx_k, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return make_node(out, (a,), bw, "max_along_axis"), idx


def sort_along_axis(a, axis: int = -1) -> tuple:
    """Ascending stable sort and the permutation used (argsort)."""
    a = as_node(a)
    perm = np.argsort(a.value, axis=axis, kind="stable")
    out = np.take_along_axis(a.value, perm, axis=axis)

    def bw(g):
        full = np.zeros_like(a.value)
        np.put_along_axis(full, perm, g, axis=axis)
        return (full,)

    return make_node(out, (a,), bw, "sort_along_axis"), perm


def logsumexp(a, axis: int = -1) -> Node:
    a = as_node(a)
    out = special.logsumexp(a.value, axis=axis)

    def bw(g):
        w = np.exp(a.value - np.expand_dims(out, axis))
        return (np.expand_dims(g, axis) * w,)

    return make_node(out, (a,), bw, "logsumexp")


def log_softmax(a, axis: int = -1) -> Node:
    a = as_node(a)
    out = special.log_softmax(a.value, axis=axis)

    def bw(g):
        p = np.exp(out)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return make_node(out, (a,), bw, "log_softmax")


def where(mask: np.ndarray, a, b) -> Node:
    """Select by a constant boolean mask; both branches share the same shape."""
    a, b = as_node(a), as_node(b)
    mask = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or mask.shape != a.shape:
        raise ShapeError("where", mask.shape, a.shape, b.shape)
    return make_node(np.where(mask, a.value, b.value), (a, b),
                     lambda g: (g * mask, g * ~mask), "where")


def normal_log_prob(x, mean=0.0, log_std=0.0) -> Node:
    """Elementwise log N(x; mean, exp(log_std)^2)."""
    x, mean, log_std = as_node(x), as_node(mean), as_node(log_std)
    u = (x - mean) * exp(-log_std)
    return -0.5 * square(u) - log_std - _LOG_SQRT_2PI


OPS = {
    "add": add, "sub": sub, "mul": mul, "div": div, "matmul": matmul, "neg": neg,
    "exp": exp, "log": log, "tanh": tanh, "relu": relu, "sigmoid": sigmoid,
    "softplus": softplus, "sum": sum, "mean": mean, "abs": abs,
    "max_along_axis": max_along_axis, "sort_along_axis": sort_along_axis,
    "concat": concat, "split": split, "gather": gather, "scatter": scatter,
    "affine": affine, "square": square, "sqrt": sqrt,
    "log_expm1": log_expm1, "log_ndtr": log_ndtr, "ndtri": ndtri, "clip": clip, "reshape": reshape,
    "broadcast_to": broadcast_to, "logsumexp": logsumexp, "log_softmax": log_softmax,
    "where": where,
}


def eval_op(op: str, *inputs, **kwargs):
    """Dispatch by name; convenience for table-driven callers and tests."""
    try:
        fn = OPS[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}") from None
    return fn(*inputs, **kwargs)
