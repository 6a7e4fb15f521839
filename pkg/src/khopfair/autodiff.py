"""A small reverse-mode differentiation tape over dense numpy matrices.

Only the operations the relaxed bias losses need are provided. Values are
computed eagerly when an op is recorded; ``backward`` replays the tape in
reverse insertion order, visiting each node once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .exceptions import NonFiniteError

DIV_FLOOR = 1e-12


@dataclass(eq=False)
class Node:
    tape: "Tape"
    index: int
    op: str
    value: np.ndarray
    parents: tuple
    vjp: Optional[Callable]
    requires_grad: bool

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.tape.scalar_mul(self, other)
        return self.tape.hadamard(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __rmatmul__(self, other):
        return self.tape.matmul(other, self)

    def __repr__(self):
        return f"Node(#{self.index} {self.op} shape={self.value.shape})"


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Append-only record of operations; parents always precede children."""

    def __init__(self):
        self.nodes: list = []

    def __len__(self):
        return len(self.nodes)

    def _record(self, op, value, parents=(), vjp=None, leaf=False) -> Node:
        value = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite value produced by {op}")
        requires = leaf or any(p.requires_grad for p in parents)
        node = Node(self, len(self.nodes), op, value, tuple(parents), vjp if requires else None, requires)
        self.nodes.append(node)
        return node

    def leaf(self, value, name: str = "leaf") -> Node:
        return self._record(name, np.array(value, dtype=float, copy=True), leaf=True)

    def const(self, value) -> Node:
        return self._record("const", value)

    def _lift(self, x) -> Node:
        if isinstance(x, Node):
            if x.tape is not self:
                raise ValueError("node belongs to another tape")
            return x
        return self.const(x)

    # -- linear algebra ---------------------------------------------------

    def matmul(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
        av, bv = a.value, b.value
        return self._record("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))

    def hadamard(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        av, bv = a.value, b.value
        try:
            out = av * bv
        except ValueError:
            raise ValueError(f"hadamard shape mismatch {a.shape} * {b.shape}") from None
        return self._record(
            "hadamard", out, (a, b),
            lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        )

    def add(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        sa, sb = a.shape, b.shape
        return self._record("add", a.value + b.value, (a, b),
                            lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        sa, sb = a.shape, b.shape
        return self._record("sub", a.value - b.value, (a, b),
                            lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))

    def scalar_mul(self, a, c: float) -> Node:
        a = self._lift(a)
        return self._record("scalar_mul", a.value * c, (a,), lambda g: (g * c,))

    def sum(self, a, axis=None, keepdims: bool = False) -> Node:
        a = self._lift(a)
        shape = a.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self._record("sum", a.value.sum(axis=axis, keepdims=keepdims), (a,), vjp)

    # -- relaxations and nonlinearities --------------------------------------

    def sigmoid_chi(self, a, beta: float = 20.0, tau: float = 0.5) -> Node:
        """Smooth positivity indicator ``sigmoid(beta * (x - tau))``."""
        a = self._lift(a)
        s = expit(beta * (a.value - tau))
        return self._record("sigmoid_chi", s, (a,), lambda g: (g * beta * s * (1.0 - s),))

    def logsumexp_max(self, a, temp: float = 0.01, centered: bool = False) -> Node:
        """Smooth maximum ``temp * log(sum(exp(x / temp)))`` over all entries.

        ``centered`` subtracts ``temp * log(size)`` (a log-mean-exp), which
        is exact when all entries tie and never exceeds the true maximum.
        The gradient is the same either way.
        """
        a = self._lift(a)
        x = a.value / temp
        w = softmax(x.ravel()).reshape(x.shape)
        out = temp * logsumexp(x)
        if centered:
            out -= temp * np.log(x.size)
        return self._record("logsumexp_max", out, (a,), lambda g: (g * w,))

    def abs_sub(self, a, b, eps: float = 0.0) -> Node:
        """``|a - b|``, or ``sqrt((a-b)^2 + eps^2) - eps`` when ``eps > 0``.

        With ``eps == 0`` the subgradient at zero is 0.
        """
        a, b = self._lift(a), self._lift(b)
        d = a.value - b.value
        if eps > 0:
            r = np.sqrt(d * d + eps * eps)
            out, slope = r - eps, d / r
        else:
            out, slope = np.abs(d), np.sign(d)
        sa, sb = a.shape, b.shape
        return self._record("abs_sub", out, (a, b),
                            lambda g: (_unbroadcast(g * slope, sa), -_unbroadcast(g * slope, sb)))

    def masked_mean(self, a, mask, axis=None) -> Node:
        """Mean of the entries selected by ``mask`` (along ``axis`` if given)."""
        a = self._lift(a)
        m = np.broadcast_to(np.asarray(mask, dtype=float), a.shape)
        cnt = m.sum(axis=axis, keepdims=True)
        if np.any(cnt == 0):
            raise ValueError("masked_mean over an empty mask")
        out = (a.value * m).sum(axis=axis, keepdims=True) / cnt
        if axis is None:
            out = out.reshape(())
        else:
            out = np.squeeze(out, axis=axis)

        def vjp(g):
            g = np.asarray(g)
            g = g.reshape((1,) * a.value.ndim) if axis is None else np.expand_dims(g, axis)
            return (g * m / cnt,)

        return self._record("masked_mean", out, (a,), vjp)

    def frobenius(self, a, squared: bool = False) -> Node:
        """Frobenius norm; the subgradient at the zero matrix is zero."""
        a = self._lift(a)
        v = a.value
        sq = float((v * v).sum())
        if squared:
            return self._record("frobenius2", sq, (a,), lambda g: (2.0 * g * v,))
        norm = np.sqrt(sq)
        scale = (1.0 / norm) if norm > 0 else 0.0
        return self._record("frobenius", norm, (a,), lambda g: (g * v * scale,))

    def clip01(self, a) -> Node:
        """Clip to [0, 1].

        The subgradient passes through on the closed interval and is 0
        strictly outside it, so scores sitting exactly at 0 or 1 can still
        move back inside.
        """
        a = self._lift(a)
        v = a.value
        inside = ((v >= 0.0) & (v <= 1.0)).astype(float)
        return self._record("clip01", np.clip(v, 0.0, 1.0), (a,), lambda g: (g * inside,))

    def safe_div(self, a, b, floor: float = DIV_FLOOR) -> Node:
        """``a / max(b, floor)``; no gradient flows to ``b`` where it is floored."""
        a, b = self._lift(a), self._lift(b)
        bv = b.value
        den = np.maximum(bv, floor)
        out = a.value / den
        active = (bv > floor).astype(float)
        sa, sb = a.shape, b.shape

        def vjp(g):
            ga = _unbroadcast(g / den, sa)
            gb = _unbroadcast(-g * out / den * active, sb)
            return ga, gb

        return self._record("safe_div", out, (a, b), vjp)


class Gradients(dict):
    """Mapping from leaf node to its gradient array."""


def backward(tape: Tape, output: Node) -> Gradients:
    """Gradients of the scalar ``output`` with respect to every leaf.

    Leaves the output does not depend on get a zero gradient.
    """
    if output.tape is not tape:
        raise ValueError("output node belongs to another tape")
    if output.value.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    grads = [None] * len(tape.nodes)
    grads[output.index] = np.ones_like(output.value)
    for node in reversed(tape.nodes[: output.index + 1]):
        g = grads[node.index]
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=float).reshape(parent.value.shape)
            if grads[parent.index] is None:
                grads[parent.index] = pg.copy()
            else:
                grads[parent.index] += pg
    out = Gradients()
    for node in tape.nodes:
        if node.vjp is None and node.requires_grad:
            g = grads[node.index]
            out[node] = np.zeros_like(node.value) if g is None else g
    return out
