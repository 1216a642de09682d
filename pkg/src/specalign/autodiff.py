"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

A Tensor is one node of a dynamically recorded computation graph: it carries a
value slot (`data`) and an adjoint slot (`grad`). Calling `backward()` on a
scalar output walks the recorded graph in reverse topological order exactly
once and accumulates adjoints into every reachable leaf.

Module-level functions (`exp`, `log`, `clip_min`, ...) dispatch on type, so
numeric code written against them runs unchanged on plain arrays (forward
only) and on Tensors (tracked). One tape/graph is single-threaded; distinct
graphs are independent.
"""

import numpy as np

from . import linalg
from .errors import DimensionError


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Value plus adjoint slot; records the op that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # keep numpy from hijacking mixed ndarray-Tensor expressions; reflected
    # operators below handle them instead
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
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
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, contribution in zip(node._parents, node._backward(node.grad)):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = contribution
                else:
                    parent.grad = parent.grad + contribution

    # ----- operators ---------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        out = _node(self.data + other.data, (self, other))
        if out._parents:
            sa, sb = self.data.shape, other.data.shape
            out._backward = lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,))
        if out._parents:
            out._backward = lambda g: (-g,)
        return out

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __mul__(self, other):
        other = _wrap(other)
        a, b = self, other
        out = _node(a.data * b.data, (a, b))
        if out._parents:
            out._backward = lambda g: (
                _unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape),
            )
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        a, b = self, other
        out = _node(a.data / b.data, (a, b))
        if out._parents:
            out._backward = lambda g: (
                _unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
            )
        return out

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __matmul__(self, other):
        other = _wrap(other)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2:
            raise DimensionError("matmul is defined for 2-D tensors only")
        out = _node(a.data @ b.data, (a, b))
        if out._parents:
            out._backward = lambda g: (g @ b.data.T, a.data.T @ g)
        return out

    def __pow__(self, exponent):
        c = float(exponent)
        out = _node(self.data ** c, (self,))
        if out._parents:
            out._backward = lambda g: (g * c * self.data ** (c - 1.0),)
        return out

    # ----- reductions / shape ------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._parents:
            shape = self.data.shape

            def backward(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                return (np.broadcast_to(g, shape).copy(),)

            out._backward = backward
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        out = _node(self.data.reshape(shape), (self,))
        if out._parents:
            out._backward = lambda g: (g.reshape(self.data.shape),)
        return out


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents):
    tracked = tuple(p for p in parents if p.requires_grad)
    out = Tensor(data, requires_grad=bool(tracked))
    if tracked:
        out._parents = tuple(parents)
    return out


def value(x):
    """Underlying numpy array of either a Tensor or an array-like."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def transpose(x):
    if not isinstance(x, Tensor):
        return np.asarray(x).T
    out = _node(x.data.T, (x,))
    if out._parents:
        out._backward = lambda g: (g.T,)
    return out


def exp(x):
    if not isinstance(x, Tensor):
        return np.exp(x)
    out = _node(np.exp(x.data), (x,))
    if out._parents:
        out._backward = lambda g: (g * out.data,)
    return out


def log(x):
    if not isinstance(x, Tensor):
        return np.log(x)
    out = _node(np.log(x.data), (x,))
    if out._parents:
        out._backward = lambda g: (g / x.data,)
    return out


def sqrt(x):
    if not isinstance(x, Tensor):
        return np.sqrt(x)
    out = _node(np.sqrt(x.data), (x,))
    if out._parents:
        out._backward = lambda g: (g * 0.5 / out.data,)
    return out


def tanh(x):
    if not isinstance(x, Tensor):
        return np.tanh(x)
    out = _node(np.tanh(x.data), (x,))
    if out._parents:
        out._backward = lambda g: (g * (1.0 - out.data * out.data),)
    return out


def sigmoid(x):
    if not isinstance(x, Tensor):
        return 1.0 / (1.0 + np.exp(-x))
    out = _node(1.0 / (1.0 + np.exp(-x.data)), (x,))
    if out._parents:
        out._backward = lambda g: (g * out.data * (1.0 - out.data),)
    return out


def clip_min(x, floor):
    """Elementwise max(x, floor); gradient passes only where x > floor."""
    if not isinstance(x, Tensor):
        return np.maximum(x, floor)
    out = _node(np.maximum(x.data, floor), (x,))
    if out._parents:
        out._backward = lambda g: (g * (x.data > floor),)
    return out


def median_of(x):
    """Median of a 1-D vector; gradient routes to the middle element(s)."""
    if not isinstance(x, Tensor):
        return float(np.median(x))
    data = x.data.ravel()
    n = data.size
    order = np.argsort(data, kind="stable")
    out = _node(np.median(data), (x,))
    if out._parents:

        def backward(g):
            grad = np.zeros_like(data)
            if n % 2 == 1:
                grad[order[n // 2]] = g
            else:
                grad[order[n // 2 - 1]] = 0.5 * g
                grad[order[n // 2]] = 0.5 * g
            return (grad.reshape(x.data.shape),)

        out._backward = backward
    return out


def pnorm(x, p=2.0):
    """p-norm of the flattened input with a zero-safe gradient at the origin."""
    p = float(p)
    if not isinstance(x, Tensor):
        return float(np.linalg.norm(np.asarray(x).ravel(), ord=p))
    data = x.data.ravel()
    norm = float(np.linalg.norm(data, ord=p))
    out = _node(norm, (x,))
    if out._parents:

        def backward(g):
            if norm == 0.0:
                return (np.zeros_like(x.data),)
            if np.isinf(p):
                grad = np.zeros_like(data)
                i = int(np.argmax(np.abs(data)))
                grad[i] = np.sign(data[i]) * g
            else:
                grad = g * np.sign(data) * np.abs(data) ** (p - 1.0) / norm ** (p - 1.0)
            return (grad.reshape(x.data.shape),)

        out._backward = backward
    return out


def l2_rows(x):
    """Row-wise Euclidean norms of a 2-D input; exact zero rows get zero grad."""
    if not isinstance(x, Tensor):
        return np.sqrt((np.asarray(x) ** 2).sum(axis=1))
    norms = np.sqrt((x.data ** 2).sum(axis=1))
    out = _node(norms, (x,))
    if out._parents:

        def backward(g):
            safe = np.where(norms > 0.0, norms, 1.0)
            return ((g / safe)[:, None] * x.data * (norms > 0.0)[:, None],)

        out._backward = backward
    return out


def take2d(x, rows, cols):
    """Gather x[rows, cols] -> 1-D; gradient scatter-adds back."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    if not isinstance(x, Tensor):
        return np.asarray(x)[rows, cols]
    out = _node(x.data[rows, cols], (x,))
    if out._parents:

        def backward(g):
            grad = np.zeros_like(x.data)
            np.add.at(grad, (rows, cols), g)
            return (grad,)

        out._backward = backward
    return out


def take_flat(x, flat_indices):
    """Gather ravel(x)[flat_indices] -> 1-D; gradient scatter-adds back."""
    flat_indices = np.asarray(flat_indices)
    if not isinstance(x, Tensor):
        return np.asarray(x).ravel()[flat_indices]
    out = _node(x.data.ravel()[flat_indices], (x,))
    if out._parents:

        def backward(g):
            grad = np.zeros(x.data.size)
            np.add.at(grad, flat_indices, g)
            return (grad.reshape(x.data.shape),)

        out._backward = backward
    return out


def reverse_grad(x, lam):
    """Identity forward; backward multiplies the incoming gradient by -lam."""
    if not isinstance(x, Tensor):
        return x
    lam = float(lam)
    out = _node(x.data, (x,))
    if out._parents:
        out._backward = lambda g: (-lam * g,)
    return out


def sym_eigvals(m):
    """Descending eigenvalues of a symmetric matrix, differentiable w.r.t. m.

    Backward is the standard eigenvalue adjoint sum_i g_i u_i u_i^T with the
    sort permutation fixed at forward time.
    """
    if not isinstance(m, Tensor):
        return linalg.sym_eig(m).values
    decomp = linalg.sym_eig(m.data)
    out = _node(decomp.values, (m,))
    if out._parents:
        out._backward = lambda g: (linalg.eig_values_backward(decomp, g),)
    return out
