"""Reverse-mode automatic differentiation over dense float64 arrays.

The whole model fits a small closed set of primitives, so the graph is kept
deliberately simple: every Tensor records its parents and one local-gradient
closure per parent, and backward() walks the graph once in reverse
topological order.  No tapes, no kernels, no dtype zoo; float64 everywhere
so the finite-difference oracle in gradcheck.py is meaningful.

Gradients are only tracked while the module-level switch is on; wrap scoring
and finite-difference evaluations in `with no_grad():` to get plain numpy
speed on the same code path.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class GraphError(RuntimeError):
    """backward() was called on an unsuitable node (non-scalar, no graph)."""


_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction inside its body."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 ndarray plus the bookkeeping needed for backward().

    `data` is owned by the Tensor and must not be mutated while the node is
    part of a live graph; the optimizer may rebind leaf data between steps.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fns")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._grad_fns = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph (stop-gradient)."""
        return Tensor(self.data)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # Operator sugar; all arithmetic routes through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take_slice(self, key)

    def backward(self) -> dict:
        """Accumulate gradients of this scalar into every reachable leaf.

        Returns a map from leaf Tensor to its gradient array; the same
        arrays are left on `leaf.grad`.  Each node is visited exactly once.
        """
        if self.data.size != 1:
            raise GraphError(
                f"backward() needs a scalar loss, got shape {self.data.shape}"
            )
        # Iterative topological sort: scan-length graphs are deeper than the
        # default recursion limit.
        order = []
        seen = {id(self)}
        stack = [(self, iter(self._parents))]
        while stack:
            node, parents = stack[-1]
            advanced = False
            for p in parents:
                if id(p) not in seen and p.requires_grad:
                    seen.add(id(p))
                    stack.append((p, iter(p._parents)))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()

        grads = {id(self): np.ones_like(self.data)}
        leaf_grads: dict[Tensor, np.ndarray] = {}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                    leaf_grads[node] = node.grad
                continue
            for parent, fn in zip(node._parents, node._grad_fns):
                contrib = fn(g)
                prev = grads.get(id(parent))
                grads[id(parent)] = contrib if prev is None else prev + contrib
        return leaf_grads


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, links) -> Tensor:
    """Build a graph node; `links` is a list of (parent, grad_fn) pairs."""
    if _grad_enabled:
        live = [(p, fn) for p, fn in links if p.requires_grad]
        if live:
            out = Tensor(data, requires_grad=True)
            out._parents = tuple(p for p, _ in live)
            out._grad_fns = tuple(fn for _, fn in live)
            return out
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return _node(out, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ])


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return _node(out, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(-g, b.data.shape)),
    ])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    return _node(out, [
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ])


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _node(out, [
        (a, lambda g: _unbroadcast(g / b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)),
    ])


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, [(a, lambda g: -g)])


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul needs 2-D or batched operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}"
        )
    out = a.data @ b.data

    def grad_a(g):
        return _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape)

    def grad_b(g):
        return _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape)

    return _node(out, [(a, grad_a), (b, grad_b)])


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _node(s, [(a, lambda g: g * s * (1.0 - s))])


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _node(t, [(a, lambda g: g * (1.0 - t * t))])


def softplus(a) -> Tensor:
    """log(1 + e^x), computed stably; derivative is the logistic sigmoid."""
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _node(out, [(a, lambda g: g * _sigmoid(a.data))])


def exp(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    return _node(e, [(a, lambda g: g * e)])


def log1p(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log1p(a.data), [(a, lambda g: g / (1.0 + a.data))])


def sin(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.sin(a.data), [(a, lambda g: g * np.cos(a.data))])


def cos(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.cos(a.data), [(a, lambda g: -g * np.sin(a.data))])


def square(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data * a.data, [(a, lambda g: 2.0 * g * a.data)])


def relu(a) -> Tensor:
    """max(x, 0); the subgradient at the kink is taken as 0."""
    a = as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), [(a, lambda g: g * mask)])


def clamp_max(a, limit: float) -> Tensor:
    """min(x, limit); gradient is 0 on the clamped side, including ties."""
    a = as_tensor(a)
    mask = a.data < limit
    return _node(np.where(mask, a.data, limit), [(a, lambda g: g * mask)])


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad(g):
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.data.shape).copy()

    return _node(out, [(a, grad)])


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.data.shape[ax]

    def grad(g):
        if axis is None:
            return np.broadcast_to(g / count, a.data.shape).copy()
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / count, a.data.shape).copy()

    return _node(out, [(a, grad)])


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return _node(out, [(a, lambda g: g.reshape(a.data.shape))])


def take_slice(a, key) -> Tensor:
    """Basic indexing (ints, slices, tuples); backward scatters into zeros."""
    a = as_tensor(a)
    # np.array (not ascontiguousarray) keeps 0-d results 0-d
    out = np.array(a.data[key], dtype=np.float64)

    def grad(g):
        buf = np.zeros_like(a.data)
        buf[key] += np.reshape(g, out.shape)
        return buf

    return _node(out, [(a, grad)])


def take(a, indices: np.ndarray, axis: int = 0) -> Tensor:
    """Gather rows by integer index; duplicate indices accumulate in backward."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    out = np.take(a.data, indices, axis=axis)

    def grad(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, (slice(None),) * axis + (indices,), g)
        return buf

    return _node(out, [(a, grad)])


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def make_grad(i):
        def grad(g):
            return np.take(g, i, axis=axis)

        return grad

    return _node(out, [(t, make_grad(i)) for i, t in enumerate(tensors)])


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in tensors])

    def make_grad(i):
        def grad(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]

        return grad

    return _node(out, [(t, make_grad(i)) for i, t in enumerate(tensors)])


def pad_axis(a, axis: int, before: int, after: int) -> Tensor:
    """Zero-pad one axis; used for causal and same-padded convolutions."""
    a = as_tensor(a)
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    out = np.pad(a.data, widths)

    def grad(g):
        sl = [slice(None)] * g.ndim
        sl[axis] = slice(before, before + a.data.shape[axis])
        return np.ascontiguousarray(g[tuple(sl)])

    return _node(out, [(a, grad)])


def assert_finite(x: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {context}")
