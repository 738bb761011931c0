"""Tape nodes and the reverse-mode sweep."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class ADError(ValueError):
    """Base class for errors raised by the differentiation engine."""


class ShapeError(ADError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {', '.join(str(s) for s in self.shapes)}")


class DomainError(ADError):
    def __init__(self, op: str, detail: str = "argument outside domain"):
        self.op = op
        super().__init__(f"{op}: {detail}")


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Node:
    """A value on the tape together with its gradient accumulator.

    Leaf nodes created by the user carry ``requires_grad`` explicitly; interior
    nodes inherit it from their parents. Nodes that do not require gradients
    drop their parents so constant subgraphs are never traversed.
    """

    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "op")
    # make ndarray <op> Node dispatch to the reflected Node operators
    __array_ufunc__ = None

    def __init__(self, value, requires_grad: bool = False, *, parents=(), backward_fn=None, op: str = "leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.parents: tuple = tuple(parents) if requires_grad else ()
        self.backward_fn: Optional[BackwardFn] = backward_fn if requires_grad else None
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Node({self.value!r}{flag}, op={self.op})"

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Node":
        return Node(self.value)

    def backward(self) -> None:
        backward(self)

    # operator sugar; the implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


class Parameter(Node):
    """A named trainable leaf. Values are updated in place by optimizers."""

    __slots__ = ("name",)

    def __init__(self, value, name: str = ""):
        super().__init__(np.array(value, dtype=np.float64, copy=True), requires_grad=True)
        self.name = name
        self.op = "param"

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def make_node(value, parents: Sequence[Node], backward_fn: BackwardFn, op: str) -> Node:
    needs = any(p.requires_grad for p in parents)
    return Node(value, needs, parents=parents, backward_fn=backward_fn, op=op)


def _topological_order(root: Node) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into ``grad`` of every reachable node.

    Gradients from repeated calls add up; call ``zero_grad`` on parameters
    between optimization steps.
    """
    if root.size != 1:
        raise ShapeError("backward (root must be scalar)", root.shape)
    if not root.requires_grad:
        return
    order = _topological_order(root)
    pending = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ShapeError(f"backward of {node.op}", pg.shape, parent.shape)
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + pg
            else:
                pending[key] = pg
