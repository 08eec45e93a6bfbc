"""Tape-based reverse-mode differentiation over NumPy arrays.

Just enough machinery to differentiate the three losses this package
trains with (squared/Huber TD error, reparameterized next-state MSE,
quantile Huber): affine maps, relu/tanh/exp, elementwise arithmetic,
clipping, row gathering and reductions.  Values are plain ndarrays; a
`Node` records how its value was produced so `grad` can replay the tape
backwards.  Anything fancier belongs in a real framework.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Node", "UnsupportedPrimitive", "ShapeMismatch", "grad"]


class UnsupportedPrimitive(Exception):
    """A loss graph used an operation this engine cannot differentiate."""


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class Node:
    """One value in a computation graph.

    `parents` holds (node, vjp) pairs, where vjp maps the gradient of the
    loss w.r.t. this node's value to the gradient contribution for that
    parent.  Leaves (parameters, inputs) have no parents.
    """

    __slots__ = ("value", "parents", "grad")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value)
        self.parents = parents
        self.grad = None

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        # NumPy ufuncs applied directly to a Node would silently produce
        # object arrays outside the tape; fail loudly instead.
        raise UnsupportedPrimitive(
            f"numpy.{ufunc.__name__} is not a differentiable primitive here; "
            "use the functions exported by sadq.autodiff"
        )

    @property
    def shape(self):
        return self.value.shape

    # Operator sugar keeps the loss-building code readable.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else Node(np.asarray(x))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient `g` down to `shape` (reverse of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def affine(x: Node, w: Node, b: Node) -> Node:
    """x @ w + b for x of shape (..., in), w (in, out), b (out,)."""
    xv, wv, bv = x.value, w.value, b.value
    if xv.shape[-1] != wv.shape[0] or wv.shape[1] != bv.shape[0]:
        raise ShapeMismatch(
            f"affine: x{xv.shape} @ w{wv.shape} + b{bv.shape}"
        )
    out = xv @ wv + bv

    def vjp_x(g):
        return g @ wv.T

    def vjp_w(g):
        if xv.ndim == 1:
            return np.outer(xv, g)
        return xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, g.shape[-1])

    def vjp_b(g):
        if g.ndim == 1:
            return g
        return g.reshape(-1, g.shape[-1]).sum(axis=0)

    return Node(out, ((x, vjp_x), (w, vjp_w), (b, vjp_b)))


def relu(x: Node) -> Node:
    mask = x.value > 0
    return Node(np.where(mask, x.value, 0.0), ((x, lambda g: g * mask),))


def tanh(x: Node) -> Node:
    t = np.tanh(x.value)
    return Node(t, ((x, lambda g: g * (1.0 - t * t)),))


def exp(x: Node) -> Node:
    e = np.exp(x.value)
    return Node(e, ((x, lambda g: g * e),))


def add(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    out = a.value + b.value
    return Node(
        out,
        (
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ),
    )


def sub(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    out = a.value - b.value
    return Node(
        out,
        (
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(-g, b.value.shape)),
        ),
    )


def mul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    out = a.value * b.value
    return Node(
        out,
        (
            (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
        ),
    )


def square(x: Node) -> Node:
    return Node(x.value * x.value, ((x, lambda g: g * (2.0 * x.value)),))


def absolute(x: Node) -> Node:
    s = np.sign(x.value)
    return Node(np.abs(x.value), ((x, lambda g: g * s),))


def clip(x: Node, lo: float, hi: float) -> Node:
    """Clamp values; gradient is zero where the clamp is active."""
    inside = (x.value >= lo) & (x.value <= hi)
    return Node(np.clip(x.value, lo, hi), ((x, lambda g: g * inside),))


def where(mask: np.ndarray, a: Node, b: Node) -> Node:
    """Select a[i] where mask else b[i]; mask is constant (no gradient)."""
    a, b = _lift(a), _lift(b)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.value, b.value)
    return Node(
        out,
        (
            (a, lambda g: _unbroadcast(np.where(mask, g, 0.0), a.value.shape)),
            (b, lambda g: _unbroadcast(np.where(mask, 0.0, g), b.value.shape)),
        ),
    )


def take_rows(x: Node, idx: np.ndarray) -> Node:
    """Pick whole rows x[idx[i], :]; gradient scatter-adds duplicates."""
    if x.value.ndim < 2:
        raise ShapeMismatch(f"take_rows needs >=2-D input, got {x.value.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    out = x.value[idx]

    def vjp(g):
        full = np.zeros_like(x.value)
        np.add.at(full, idx, g)
        return full

    return Node(out, ((x, vjp),))


def reshape(x: Node, shape) -> Node:
    orig = x.value.shape
    return Node(x.value.reshape(shape), ((x, lambda g: g.reshape(orig)),))


def gather_rows(x: Node, idx: np.ndarray) -> Node:
    """Pick x[i, idx[i]] for each row i of a 2-D node."""
    if x.value.ndim != 2:
        raise ShapeMismatch(f"gather_rows needs 2-D input, got {x.value.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(x.value.shape[0])
    out = x.value[rows, idx]

    def vjp(g):
        full = np.zeros_like(x.value)
        full[rows, idx] = g
        return full

    return Node(out, ((x, vjp),))


def total(x: Node) -> Node:
    out = x.value.sum()
    return Node(out, ((x, lambda g: np.full(x.value.shape, g, x.value.dtype)),))


def mean(x: Node, axis=None) -> Node:
    out = x.value.mean(axis=axis)
    n = x.value.size if axis is None else x.value.shape[axis]
    inv = 1.0 / n

    def vjp(g):
        if axis is None:
            return np.full(x.value.shape, g * inv, x.value.dtype)
        return np.broadcast_to(np.expand_dims(g, axis) * inv, x.value.shape).astype(
            x.value.dtype, copy=False
        )

    return Node(out, ((x, vjp),))


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def grad(loss: Node, params: list[Node]) -> list[np.ndarray]:
    """Gradients of a scalar loss node w.r.t. each parameter node.

    Parameters the loss does not depend on get exact-zero gradients of
    the matching shape.
    """
    if loss.value.ndim != 0:
        raise ShapeMismatch(f"loss must be scalar, got shape {loss.value.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.asarray(1.0, dtype=loss.value.dtype)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.array(contrib, dtype=parent.value.dtype, copy=True)
            else:
                parent.grad += contrib
    return [
        p.grad if p.grad is not None else np.zeros_like(p.value) for p in params
    ]
