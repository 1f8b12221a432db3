"""Reverse-mode automatic differentiation on numpy arrays.

Tensors wrap float64 ndarrays.  Operations executed while a Tape is
active append nodes to it (define-by-run); Tape.backward walks the
recorded nodes in reverse creation order and accumulates vector-Jacobian
products into ``Tensor.grad``.  A tape is single use: the graph is
rebuilt every iteration, which keeps memory bounded and makes control
flow trivial.

Broadcasting is deliberately restricted to the cases the rest of the
package needs: equal shapes, scalar against anything, and a
lower-rank operand aligned to the trailing axes of the other (e.g.
``[N, K] op [K]`` for bias addition).  Anything else raises ShapeError
instead of silently broadcasting.
"""

from __future__ import annotations

import threading

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are not compatible for an op."""


class TapeError(RuntimeError):
    """Raised on invalid tape usage (no active tape, reuse, bad root)."""


class NonFiniteError(ArithmeticError):
    """Raised when a value that must be finite contains NaN or inf."""


_state = threading.local()


def _tape_stack():
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape():
    """Return the innermost active Tape, or None outside any ``with tape:``."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Records operations for one forward pass.

    Use as a context manager::

        with Tape() as tape:
            loss = model(x)
        tape.backward(loss)

    After ``backward`` the tape is consumed and cannot be reused.
    """

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def _record(self, tensor):
        tensor._tape = self
        tensor._index = len(self._nodes)
        self._nodes.append(tensor)

    def backward(self, root):
        """Accumulate d(root)/d(tensor) into ``.grad`` of every ancestor.

        ``root`` must be a scalar recorded on this tape with
        ``requires_grad=True``.  Gradients add onto any existing ``.grad``
        contents; call ``zero_grad`` on parameters between steps.
        """
        if self._consumed:
            raise TapeError("tape already consumed by a previous backward")
        if not isinstance(root, Tensor) or root._tape is not self:
            raise TapeError("backward root was not recorded on this tape")
        if root.data.shape != ():
            raise TapeError(
                f"backward root must be scalar, got shape {root.data.shape}"
            )
        if not root.requires_grad:
            raise TapeError("backward root does not require grad")
        self._consumed = True

        root.grad = np.ones((), dtype=np.float64)
        for node in reversed(self._nodes[: root._index + 1]):
            if node.grad is None or node._vjp is None:
                continue
            node._vjp(node.grad)
            # free closure references so intermediates can be collected
            node._vjp = None
        self._nodes = []


class Tensor:
    """A float64 array with an optional gradient.

    ``grad`` is None until backward reaches the tensor; None means zero.
    Leaf tensors (parameters, inputs) are created directly; interior
    tensors are produced by ops and carry a VJP closure on the tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_vjp", "_tape", "_index")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._vjp = None
        self._tape = None
        self._index = -1

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        """A constant view of the same data, off the graph."""
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # operator sugar; implementations live at module level
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
        return getitem(self, key)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def ensure_finite(t, what="tensor"):
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{what} contains NaN or inf")
    return t


def _make(data, parents, vjp):
    """Create an op result, recording it if grads are needed and a tape is active."""
    out = Tensor(data)
    tape = active_tape()
    needs = any(p.requires_grad for p in parents)
    if tape is not None and needs:
        out.requires_grad = True
        out._vjp = vjp
        tape._record(out)
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros(t.data.shape, dtype=np.float64)
    t.grad += g


def _check_elementwise(op, a, b):
    sa, sb = a.data.shape, b.data.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sb) < len(sa) and sa[len(sa) - len(sb):] == sb:
        return
    if len(sa) < len(sb) and sb[len(sb) - len(sa):] == sa:
        return
    raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


def _reduce_to(g, shape):
    """Sum a broadcast gradient back down to ``shape`` (leading axes only)."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum(), dtype=np.float64)
    extra = g.ndim - len(shape)
    return g.sum(axis=tuple(range(extra)))


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)
    data = a.data + b.data

    def vjp(g):
        _accumulate(a, _reduce_to(g, a.data.shape))
        _accumulate(b, _reduce_to(g, b.data.shape))

    return _make(data, (a, b), vjp)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)
    data = a.data - b.data

    def vjp(g):
        _accumulate(a, _reduce_to(g, a.data.shape))
        _accumulate(b, _reduce_to(-g, b.data.shape))

    return _make(data, (a, b), vjp)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("mul", a, b)
    data = a.data * b.data

    def vjp(g):
        _accumulate(a, _reduce_to(g * b.data, a.data.shape))
        _accumulate(b, _reduce_to(g * a.data, b.data.shape))

    return _make(data, (a, b), vjp)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("div", a, b)
    data = a.data / b.data

    def vjp(g):
        _accumulate(a, _reduce_to(g / b.data, a.data.shape))
        _accumulate(b, _reduce_to(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), vjp)


def neg(a):
    a = as_tensor(a)

    def vjp(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), vjp)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def sin(a):
    a = as_tensor(a)
    data = np.sin(a.data)

    def vjp(g):
        _accumulate(a, g * np.cos(a.data))

    return _make(data, (a,), vjp)


def cos(a):
    a = as_tensor(a)
    data = np.cos(a.data)

    def vjp(g):
        _accumulate(a, -g * np.sin(a.data))

    return _make(data, (a,), vjp)


def tanh(a):
    a = as_tensor(a)
    data = np.tanh(a.data)

    def vjp(g):
        _accumulate(a, g * (1.0 - data * data))

    return _make(data, (a,), vjp)


def absolute(a):
    """|a|, with subgradient 0 at exactly 0."""
    a = as_tensor(a)
    data = np.abs(a.data)

    def vjp(g):
        _accumulate(a, g * np.sign(a.data))

    return _make(data, (a,), vjp)


def square(a):
    a = as_tensor(a)
    data = a.data * a.data

    def vjp(g):
        _accumulate(a, 2.0 * g * a.data)

    return _make(data, (a,), vjp)


def sqrt(a):
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def vjp(g):
        _accumulate(a, 0.5 * g / data)

    return _make(data, (a,), vjp)


def clamp(a, lo, hi):
    """Clip to [lo, hi]; gradient is zero where the clip is active."""
    a = as_tensor(a)
    data = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def vjp(g):
        _accumulate(a, g * inside)

    return _make(data, (a,), vjp)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a, axis=None):
    a = as_tensor(a)
    data = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            _accumulate(a, np.full(a.data.shape, g, dtype=np.float64))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape))

    return _make(data, (a,), vjp)


def tmean(a, axis=None):
    a = as_tensor(a)
    data = a.data.mean(axis=axis)
    n = a.data.size if axis is None else a.data.shape[axis]

    def vjp(g):
        if axis is None:
            _accumulate(a, np.full(a.data.shape, g / n, dtype=np.float64))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g / n, axis), a.data.shape))

    return _make(data, (a,), vjp)


def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def vjp(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _make(data, (a,), vjp)


def getitem(a, key):
    """Basic indexing (ints, slices, Ellipsis).  No index arrays."""
    a = as_tensor(a)
    data = a.data[key]

    def vjp(g):
        full = np.zeros(a.data.shape, dtype=np.float64)
        full[key] += g
        _accumulate(a, full)

    return _make(data, (a,), vjp)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    return _make(data, tuple(tensors), vjp)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul expects 2-d operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def vjp(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(data, (a, b), vjp)


# ---------------------------------------------------------------------------
# gather / scale primitives used by the sampler


def gather_rows(a, idx):
    """Select rows of a 2-d tensor: out[k] = a[idx[k]].

    ``idx`` is a constant int array; repeated indices accumulate in the
    adjoint (np.add.at), which is what bilinear sampling needs.
    """
    a = as_tensor(a)
    idx = np.asarray(idx)
    if a.data.ndim != 2:
        raise ShapeError(f"gather_rows expects a 2-d tensor, got {a.data.shape}")
    data = a.data[idx]

    def vjp(g):
        full = np.zeros(a.data.shape, dtype=np.float64)
        np.add.at(full, idx, g)
        _accumulate(a, full)

    return _make(data, (a,), vjp)


def rowscale(a, s):
    """Scale each row of a 2-d tensor by a per-row factor: out[k, :] = a[k, :] * s[k]."""
    a, s = as_tensor(a), as_tensor(s)
    if a.data.ndim != 2 or s.data.ndim != 1 or a.data.shape[0] != s.data.shape[0]:
        raise ShapeError(f"rowscale: got {a.data.shape} and {s.data.shape}")
    data = a.data * s.data[:, None]

    def vjp(g):
        _accumulate(a, g * s.data[:, None])
        _accumulate(s, (g * a.data).sum(axis=1))

    return _make(data, (a, s), vjp)


# ---------------------------------------------------------------------------
# clipped sliding box sum (integral images)


def _box_sum_raw(x, up, down, left, right):
    H, W = x.shape
    c = np.zeros((H + 1, W + 1), dtype=np.float64)
    np.cumsum(np.cumsum(x, axis=0), axis=1, out=c[1:, 1:])
    rows = np.arange(H)
    cols = np.arange(W)
    r0 = np.maximum(rows - up, 0)
    r1 = np.minimum(rows + down + 1, H)
    c0 = np.maximum(cols - left, 0)
    c1 = np.minimum(cols + right + 1, W)
    return (
        c[np.ix_(r1, c1)] - c[np.ix_(r0, c1)] - c[np.ix_(r1, c0)] + c[np.ix_(r0, c0)]
    )


def box_sum2d(a, up, down, left, right):
    """Sliding window sum over a 2-d tensor with a window clipped at borders.

    out[i, j] sums a[r, c] for r in [i-up, i+down], c in [j-left, j+right],
    intersected with the image.  The adjoint is the same box sum with the
    extents mirrored: cell (r, c) lies in the window of (i, j) exactly when
    (i, j) lies in the mirrored window of (r, c).
    """
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"box_sum2d expects a 2-d tensor, got {a.data.shape}")
    data = _box_sum_raw(a.data, up, down, left, right)

    def vjp(g):
        _accumulate(a, _box_sum_raw(g, down, up, right, left))

    return _make(data, (a,), vjp)
