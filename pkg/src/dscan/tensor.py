"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array (float32 by default, float64 supported)
together with an optional gradient buffer. Operations build an implicit
graph through parent links; ``backward`` linearizes the graph into a
``Tape`` and walks it once in reverse, accumulating gradients additively
so a tensor used in several places receives the sum of all contributions.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import DimensionError, UsageError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / bookkeeping)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


def _as_float_array(data, dtype):
    arr = np.asarray(data)
    if dtype is not None:
        return np.ascontiguousarray(arr, dtype=dtype)
    if arr.dtype in (np.float32, np.float64):
        return arr
    return arr.astype(np.float32)


class Tensor:
    """N-dimensional value with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "backward_fn")

    def __init__(self, data, requires_grad=False, dtype=None, op="leaf", parents=()):
        self.data = _as_float_array(data, dtype)
        self.grad = None
        if parents:
            # interior node: honors the global grad switch
            keep = bool(requires_grad) and _GRAD_ENABLED
            self.requires_grad = keep
            self.parents = tuple(parents) if keep else ()
        else:
            self.requires_grad = bool(requires_grad)
            self.parents = ()
        self.op = op
        self.backward_fn = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._non_scalar()

    def _non_scalar(self):
        raise UsageError(f"item() requires a scalar tensor, got shape {self.shape}")

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}, op={self.op!r})"

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # -- graph construction helpers ------------------------------------------

    def accumulate_grad(self, g, own=False):
        """Add ``g`` into this tensor's gradient buffer (allocating on first use).

        ``own=True`` promises ``g`` is a freshly allocated array no other
        consumer will reuse, letting the first accumulation skip its copy.
        """
        if self.grad is None:
            if own and isinstance(g, np.ndarray) and g.dtype == self.data.dtype \
                    and g.flags.writeable:
                self.grad = g
            else:
                self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return _binary(self, other, "add", lambda a, b: a + b,
                       lambda g, a, b: g, lambda g, a, b: g)

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, "sub", lambda a, b: a - b,
                       lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        return _binary(self, other, "mul", lambda a, b: a * b,
                       lambda g, a, b: g * b, lambda g, a, b: g * a)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, "div", lambda a, b: a / b,
                       lambda g, a, b: g / b, lambda g, a, b: -g * a / (b * b))

    def __rtruediv__(self, other):
        return _coerce(other) / self

    def __neg__(self):
        out = Tensor(-self.data, requires_grad=self.requires_grad, op="neg", parents=(self,))
        if out.parents:
            def backward_fn(g, x=self):
                x.accumulate_grad(-g, own=True)
            out.backward_fn = backward_fn
        return out

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise UsageError("only scalar exponents are supported")
        out = Tensor(self.data ** exponent, requires_grad=self.requires_grad,
                     op="pow", parents=(self,))
        if out.parents:
            def backward_fn(g, x=self, e=exponent):
                x.accumulate_grad(g * e * x.data ** (e - 1), own=True)
            out.backward_fn = backward_fn
        return out

    def log(self):
        out = Tensor(np.log(self.data), requires_grad=self.requires_grad,
                     op="log", parents=(self,))
        if out.parents:
            def backward_fn(g, x=self):
                x.accumulate_grad(g / x.data, own=True)
            out.backward_fn = backward_fn
        return out

    def __matmul__(self, other):
        other = _coerce(other)
        if self.ndim != 2 or other.ndim != 2:
            raise DimensionError(
                f"matmul expects 2-D operands, got {self.ndim}-D and {other.ndim}-D")
        if self.shape[1] != other.shape[0]:
            raise DimensionError(
                f"matmul inner dimensions disagree: {self.shape[1]} vs {other.shape[0]}")
        requires = self.requires_grad or other.requires_grad
        out = Tensor(self.data @ other.data, requires_grad=requires,
                     op="matmul", parents=(self, other))
        if out.parents:
            def backward_fn(g, a=self, b=other):
                if a.requires_grad:
                    a.accumulate_grad(g @ b.data.T, own=True)
                if b.requires_grad:
                    b.accumulate_grad(a.data.T @ g, own=True)
            out.backward_fn = backward_fn
        return out

    # -- reductions and shape ops ----------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        out = Tensor(out_data, requires_grad=self.requires_grad, op="sum", parents=(self,))
        if out.parents:
            def backward_fn(g, x=self, axis=axis, keepdims=keepdims):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                x.accumulate_grad(np.broadcast_to(g, x.shape))
            out.backward_fn = backward_fn
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.size if axis is None else np.prod(
            [self.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), requires_grad=self.requires_grad,
                     op="reshape", parents=(self,))
        if out.parents:
            def backward_fn(g, x=self):
                x.accumulate_grad(g.reshape(x.shape))
            out.backward_fn = backward_fn
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], requires_grad=self.requires_grad,
                     op="slice", parents=(self,))
        if out.parents:
            def backward_fn(g, x=self, idx=idx):
                full = np.zeros_like(x.data)
                full[idx] += g
                x.accumulate_grad(full, own=True)
            out.backward_fn = backward_fn
        return out

    def backward(self):
        backward(self)


def _coerce(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(a, b, name, fwd, grad_a, grad_b):
    a, b = _coerce(a), _coerce(b)
    requires = a.requires_grad or b.requires_grad
    out = Tensor(fwd(a.data, b.data), requires_grad=requires, op=name, parents=(a, b))
    if out.parents:
        def backward_fn(g, a=a, b=b, grad_a=grad_a, grad_b=grad_b):
            if a.requires_grad:
                ga = _unbroadcast(grad_a(g, a.data, b.data), a.shape)
                a.accumulate_grad(ga, own=ga is not g)
            if b.requires_grad:
                gb = _unbroadcast(grad_b(g, a.data, b.data), b.shape)
                b.accumulate_grad(gb, own=gb is not g)
        out.backward_fn = backward_fn
    return out


class Tape:
    """Topologically ordered record of the operations below a root tensor.

    ``nodes`` lists every reachable tensor with parents before consumers;
    ``operations`` restricts that to non-leaf tensors (executed ops).
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @property
    def operations(self):
        return [n for n in self.nodes if n.parents]

    @classmethod
    def trace(cls, root):
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)


def backward(loss):
    """Populate ``grad`` for every ``requires_grad`` tensor below ``loss``."""
    if loss.size != 1:
        raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
    tape = Tape.trace(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)
    return tape
