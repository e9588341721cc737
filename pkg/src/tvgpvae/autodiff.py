"""A small reverse-mode differentiation tape over numpy arrays.

Each :class:`Var` records its parents together with a vector-Jacobian product
for each of them. :func:`backward` walks the graph once in reverse
topological order and accumulates ``.grad`` on every node.

Only the operations the VAE needs are provided: broadcasting arithmetic,
elementwise nonlinearities, reductions, reshapes, basic indexing, ``einsum``
and bidiagonal triangular solves.
"""
from __future__ import annotations

import numpy as np

from .sparse_precision import batched_solve, batched_solve_t


class Var:
    # make numpy defer binary operators to the reflected Var methods
    __array_ufunc__ = None

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.grad = None

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(lift(other)))

    def __rsub__(self, other):
        return add(lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, reciprocal(lift(other)))

    def __rtruediv__(self, other):
        return mul(lift(other), reciprocal(self))

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def lift(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _topological(out: Var) -> list[Var]:
    order, seen = [], set()
    stack = [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
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


def backward(out: Var) -> None:
    """Populate ``.grad`` on every node reachable from the scalar ``out``."""
    if out.value.size != 1:
        raise ValueError("backward() needs a scalar output")
    order = _topological(out)
    for node in order:
        node.grad = None
    out.grad = np.ones_like(out.value)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            g = vjp(node.grad)
            parent.grad = g if parent.grad is None else parent.grad + g


def grad(fn, params: dict):
    """Evaluate scalar ``fn(vars)`` and return ``(value, grads)`` keyed like ``params``."""
    vs = {k: Var(v) for k, v in params.items()}
    out = fn(vs)
    backward(out)
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in vs.items()}
    return float(out.value), grads


# --- arithmetic -------------------------------------------------------------

def add(a, b) -> Var:
    a, b = lift(a), lift(b)
    return Var(a.value + b.value, (
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    ))


def neg(a: Var) -> Var:
    return Var(-a.value, ((a, lambda g: -g),))


def mul(a, b) -> Var:
    a, b = lift(a), lift(b)
    return Var(a.value * b.value, (
        (a, lambda g: _unbroadcast(g * b.value, a.shape)),
        (b, lambda g: _unbroadcast(g * a.value, b.shape)),
    ))


def reciprocal(a: Var) -> Var:
    r = 1.0 / a.value
    return Var(r, ((a, lambda g: -g * r * r),))


def power(a: Var, p: float) -> Var:
    return Var(a.value ** p, ((a, lambda g: g * p * a.value ** (p - 1)),))


def matmul(a, b) -> Var:
    a, b = lift(a), lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul supports 2-d operands; use einsum otherwise")
    return Var(a.value @ b.value, (
        (a, lambda g: g @ b.value.T),
        (b, lambda g: a.value.T @ g),
    ))


# --- elementwise -------------------------------------------------------------

def exp(a: Var) -> Var:
    e = np.exp(a.value)
    return Var(e, ((a, lambda g: g * e),))


def log(a: Var) -> Var:
    return Var(np.log(a.value), ((a, lambda g: g / a.value),))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return Var(np.where(mask, a.value, 0.0), ((a, lambda g: g * mask),))


def sigmoid(a: Var) -> Var:
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Var(s, ((a, lambda g: g * s * (1.0 - s)),))


def softplus(a: Var) -> Var:
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Var(np.logaddexp(0.0, a.value), ((a, lambda g: g * s),))


# --- shape and reductions ----------------------------------------------------

def sum_(a: Var, axis=None) -> Var:
    shape = a.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return Var(a.value.sum(axis=axis), ((a, vjp),))


def mean(a: Var, axis=None) -> Var:
    n = a.value.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return sum_(a, axis) * (1.0 / n)


def reshape(a: Var, shape) -> Var:
    old = a.shape
    return Var(a.value.reshape(shape), ((a, lambda g: g.reshape(old)),))


def getitem(a: Var, idx) -> Var:
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        out[idx] += g
        return out

    return Var(a.value[idx], ((a, vjp),))


def einsum(subscripts: str, *operands) -> Var:
    """``numpy.einsum`` with explicit output; no index may repeat within one operand."""
    ins, out = subscripts.replace(" ", "").split("->")
    ins = ins.split(",")
    ops = [lift(o) for o in operands]
    if len(ins) != len(ops):
        raise ValueError("subscript count does not match operands")
    for s in ins:
        if len(set(s)) != len(s):
            raise ValueError(f"repeated index within operand {s!r}")
    result = np.einsum(subscripts, *(o.value for o in ops))

    def make_vjp(i):
        target = ins[i]
        others = [ins[j] for j in range(len(ops)) if j != i]
        other_vals = [ops[j] for j in range(len(ops)) if j != i]
        avail = set(out).union(*others) if others else set(out)
        kept = "".join(c for c in target if c in avail)

        def vjp(g):
            spec = ",".join([out] + others) + "->" + kept
            r = np.einsum(spec, g, *(o.value for o in other_vals))
            if kept != target:
                # indices summed inside this operand alone: broadcast back
                for pos, c in enumerate(target):
                    if c not in avail:
                        r = np.expand_dims(r, pos)
                r = np.broadcast_to(r, ops[i].shape).copy()
            return r

        return vjp

    return Var(result, tuple((o, make_vjp(i)) for i, o in enumerate(ops)))


def stack(vars_, axis=0) -> Var:
    vars_ = [lift(v) for v in vars_]
    parents = tuple(
        (v, (lambda i: lambda g: np.take(g, i, axis=axis))(i)) for i, v in enumerate(vars_))
    return Var(np.stack([v.value for v in vars_], axis=axis), parents)


# --- bidiagonal solves -------------------------------------------------------

def bidiag_solve_t(d, s, v, axis: int) -> Var:
    """Solve ``L^T x = v`` along ``axis`` of ``v`` for lower-bidiagonal ``L``.

    ``d``/``s`` hold the diagonal and subdiagonal in their last axis and must
    broadcast against ``v`` once ``axis`` is moved to the end.
    """
    d, s, v = lift(d), lift(s), lift(v)
    vm = np.moveaxis(v.value, axis, -1)
    x = batched_solve_t(d.value, s.value, vm)

    cache = [None, None]

    def adjoint(g):
        # u = L^{-1} g is the cotangent of v; dL_ij = -x_i u_j
        if cache[0] is not g:
            cache[0] = g
            cache[1] = batched_solve(d.value, s.value, np.moveaxis(g, axis, -1))
        return cache[1]

    def vjp_v(g):
        return _unbroadcast(np.moveaxis(adjoint(g), -1, axis), v.shape)

    def vjp_d(g):
        return _unbroadcast(-x * adjoint(g), d.shape)

    def vjp_s(g):
        u = adjoint(g)
        return _unbroadcast(-x[..., 1:] * u[..., :-1], s.shape)

    return Var(np.moveaxis(x, -1, axis), ((v, vjp_v), (d, vjp_d), (s, vjp_s)))
