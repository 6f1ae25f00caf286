"""Reverse-mode automatic differentiation over dense float64 arrays.

Every trainable quantity in this package is a :class:`Tensor` leaf. Forward
ops record backward closures; :meth:`Tensor.backward` replays them in reverse
topological order and accumulates gradients into the leaves. Shapes follow
numpy broadcasting; gradients are summed back down to each parent's shape.

All data is float64. There is no GPU path and no operator fusion; graphs of a
few thousand nodes per step are the design point.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "no_grad",
    "set_debug",
    "concat",
    "matmul",
    "scatter_add",
    "softmax",
    "layer_norm",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


_grad_enabled = True
_check_finite = False


@contextlib.contextmanager
def no_grad():
    """Context manager that disables tape recording (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_debug(check_finite: bool) -> None:
    """Toggle per-op non-finite detection. Off by default; costs one scan per op."""
    global _check_finite
    _check_finite = bool(check_finite)


def _asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense float64 array participating in a gradient tape."""

    # make `ndarray <op> Tensor` defer to our reflected methods
    __array_ufunc__ = None

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "_tmp", "_tmp_owned")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._tmp: np.ndarray | None = None
        self._tmp_owned = False

    # -- construction ------------------------------------------------------

    @staticmethod
    def _op(data: np.ndarray, parents: tuple["Tensor", ...], backward_fn) -> "Tensor":
        if _check_finite and not np.all(np.isfinite(data)):
            raise FloatingPointError("non-finite values produced by an op")
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward_fn = backward_fn
        return out

    def _acc(self, g: np.ndarray) -> None:
        # single-consumer nodes just borrow g; only a second contribution
        # forces an owned buffer (g may be a view another closure also holds)
        if self._tmp is None:
            self._tmp = g
            self._tmp_owned = False
        elif self._tmp_owned:
            self._tmp += g
        else:
            self._tmp = self._tmp + g
            self._tmp_owned = True

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``.

        ``self`` must be scalar. Repeated calls without clearing grads add up.
        Intermediate gradients live only for the duration of the call.
        """
        if self.data.ndim != 0:
            raise ShapeError(f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._tmp = np.ones((), dtype=np.float64)
        for node in reversed(topo):
            if node._backward_fn is not None and node._tmp is not None:
                node._backward_fn(node._tmp)
        for node in topo:
            if node.requires_grad and node._backward_fn is None and node._tmp is not None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += node._tmp
            node._tmp = None
            node._tmp_owned = False

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        a, b = self, self._coerce(other)
        data = _broadcast_op(a, b, np.add)

        def bw(g):
            a._acc(_unbroadcast(g, a.shape))
            b._acc(_unbroadcast(g, b.shape))

        return Tensor._op(data, (a, b), bw)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self, self._coerce(other)
        data = _broadcast_op(a, b, np.subtract)

        def bw(g):
            a._acc(_unbroadcast(g, a.shape))
            b._acc(_unbroadcast(-g, b.shape))

        return Tensor._op(data, (a, b), bw)

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __neg__(self):
        a = self

        def bw(g):
            a._acc(-g)

        return Tensor._op(-a.data, (a,), bw)

    def __mul__(self, other):
        a, b = self, self._coerce(other)
        data = _broadcast_op(a, b, np.multiply)
        ad, bd = a.data, b.data

        def bw(g):
            a._acc(_unbroadcast(g * bd, a.shape))
            b._acc(_unbroadcast(g * ad, b.shape))

        return Tensor._op(data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, self._coerce(other)
        data = _broadcast_op(a, b, np.divide)
        ad, bd = a.data, b.data

        def bw(g):
            a._acc(_unbroadcast(g / bd, a.shape))
            b._acc(_unbroadcast(-g * ad / (bd * bd), b.shape))

        return Tensor._op(data, (a, b), bw)

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __pow__(self, c):
        if not isinstance(c, (int, float)):
            raise TypeError("only scalar exponents are supported")
        a = self
        data = a.data ** c
        ad = a.data

        def bw(g):
            a._acc(g * c * ad ** (c - 1))

        return Tensor._op(data, (a,), bw)

    def __matmul__(self, other):
        return matmul(self, self._coerce(other))

    def __getitem__(self, key):
        a = self
        data = a.data[key]

        def bw(g):
            if isinstance(key, np.ndarray) and key.ndim == 1 \
                    and key.dtype.kind in "iu":
                a._acc(_segment_sum(g, key, a.shape[0]))
                return
            buf = np.zeros_like(a.data)
            if _is_fancy(key):
                np.add.at(buf, key, g)
            else:
                buf[key] += g
            a._acc(buf)

        return Tensor._op(data, (a,), bw)

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        data = a.data.reshape(shape)
        orig = a.shape

        def bw(g):
            a._acc(g.reshape(orig))

        return Tensor._op(data, (a,), bw)

    def transpose(self, axes: Sequence[int] | None = None):
        a = self
        if axes is None:
            axes = tuple(reversed(range(a.ndim)))
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        data = a.data.transpose(axes)

        def bw(g):
            a._acc(g.transpose(inv))

        return Tensor._op(data, (a,), bw)

    def swapaxes(self, i: int, j: int):
        axes = list(range(self.ndim))
        axes[i], axes[j] = axes[j], axes[i]
        return self.transpose(axes)

    @property
    def T(self):
        return self.transpose()

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        data = a.data.sum(axis=axis, keepdims=keepdims)
        shape = a.shape

        def bw(g):
            a._acc(_expand_reduced(g, shape, axis, keepdims))

        return Tensor._op(data, (a,), bw)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.size if axis is None else _axis_count(self.shape, axis)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- pointwise nonlinearities -------------------------------------------

    def exp(self):
        a = self
        data = np.exp(a.data)

        def bw(g):
            a._acc(g * data)

        return Tensor._op(data, (a,), bw)

    def log(self):
        a = self
        ad = a.data

        def bw(g):
            a._acc(g / ad)

        return Tensor._op(np.log(ad), (a,), bw)

    def sqrt(self):
        a = self
        data = np.sqrt(a.data)

        def bw(g):
            a._acc(g * 0.5 / data)

        return Tensor._op(data, (a,), bw)

    def sigmoid(self):
        a = self
        x = a.data
        z = np.exp(-np.abs(x))
        data = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

        def bw(g):
            a._acc(g * data * (1.0 - data))

        return Tensor._op(data, (a,), bw)

    def tanh(self):
        a = self
        data = np.tanh(a.data)

        def bw(g):
            a._acc(g * (1.0 - data * data))

        return Tensor._op(data, (a,), bw)

    def relu(self):
        a = self
        mask = a.data > 0

        def bw(g):
            a._acc(g * mask)

        return Tensor._op(a.data * mask, (a,), bw)

    def clip(self, lo: float, hi: float):
        """Clamp values; gradient passes only through the unclamped region."""
        a = self
        data = np.clip(a.data, lo, hi)
        mask = (a.data >= lo) & (a.data <= hi)

        def bw(g):
            a._acc(g * mask)

        return Tensor._op(data, (a,), bw)


def _broadcast_op(a: Tensor, b: Tensor, ufunc) -> np.ndarray:
    try:
        return ufunc(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}") from exc


def _is_fancy(key) -> bool:
    items = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (np.ndarray, list)) for k in items)


def _segment_sum(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    """Row-wise scatter-sum via sort + reduceat (much faster than np.add.at)."""
    out = np.zeros((size,) + values.shape[1:], dtype=np.float64)
    if len(index) == 0:
        return out
    order = np.argsort(index, kind="stable")
    sorted_idx = index[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(sorted_idx)) + 1])
    out[sorted_idx[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


def _axis_count(shape: tuple, axis) -> int:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    n = 1
    for ax in axes:
        n *= shape[ax]
    return n


def _expand_reduced(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    """Broadcast a reduction gradient back to the pre-reduction shape."""
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with batched (stacked) support via np.matmul semantics."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires ndim >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"shape mismatch: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)
    ad, bd = a.data, b.data

    def bw(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        a._acc(_unbroadcast(ga, a.shape))
        b._acc(_unbroadcast(gb, b.shape))

    return Tensor._op(data, (a, b), bw)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat of an empty sequence")
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, offsets, axis=axis)):
            t._acc(piece)

    return Tensor._op(data, tuple(ts), bw)


def scatter_add(src: Tensor, index: np.ndarray, size: int) -> Tensor:
    """Sum rows of `src` into `size` output slots: out[index[i]] += src[i].

    The workhorse of graph message aggregation; index is a constant int array
    over axis 0.
    """
    index = np.asarray(index, dtype=np.intp)
    if index.ndim != 1 or index.shape[0] != src.shape[0]:
        raise ShapeError(f"index shape {index.shape} does not match src rows {src.shape}")
    # np.add.at accumulates in input order, exactly like a brute-force loop;
    # the contract is bit-equality with an O(V*E) reference aggregation
    data = np.zeros((size,) + src.shape[1:], dtype=np.float64)
    np.add.at(data, index, src.data)

    def bw(g):
        src._acc(g[index])

    return Tensor._op(data, (src,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max-shift is detached)."""
    shift = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - shift)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        x._acc((g - inner) * data)

    return Tensor._op(data, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, axis: int = -1,
               eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance along `axis`, then affine."""
    mu = x.mean(axis=axis, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=axis, keepdims=True)
    normed = centered / (var + eps).sqrt()
    return normed * gain + bias
