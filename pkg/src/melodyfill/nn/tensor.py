"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; calling
``backward()`` on a scalar loss walks the recorded graph in reverse
topological order and accumulates gradients into every tensor with
``requires_grad`` set.  The op set is deliberately small: exactly what the
GRU-based encoder/decoder models here need.

Precision is controlled globally: production runs in float32, gradient
checking switches the whole core to float64 via ``set_dtype``.
"""

from __future__ import annotations

import numpy as np

_DTYPE = np.float32
_GRAD_ENABLED = True
_DEBUG = False


def set_dtype(dtype) -> None:
    """Set the global dtype for newly created tensors (float32 or float64)."""
    global _DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError("dtype must be numpy float32 or float64")
    _DTYPE = dtype


def get_dtype():
    return _DTYPE


def set_debug(flag: bool) -> None:
    """Enable per-op finiteness assertions (slow; for tests)."""
    global _DEBUG
    _DEBUG = bool(flag)


class no_grad:
    """Context manager that disables graph recording inside the block."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class ShapeMismatch(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None

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

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this (scalar) tensor w.r.t. the graph."""
        if self.data.size != 1:
            raise ShapeMismatch("backward() requires a scalar tensor")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._vjp is not None:
                node._vjp(node.grad)

    # operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad += g


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    if _DEBUG and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values produced by a forward op")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# elementwise ops ----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: _accumulate(a, -g))


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: _accumulate(a, 2.0 * a.data * g))


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)
    return _make(data, (a,), lambda g: _accumulate(a, g * data))


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: _accumulate(a, g / a.data))


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)
    return _make(data, (a,), lambda g: _accumulate(a, g * (1.0 - data * data)))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    # exp(-logaddexp(0, -x)) is the overflow-safe sigmoid
    data = np.exp(-np.logaddexp(0.0, -a.data))
    return _make(data, (a,), lambda g: _accumulate(a, g * data * (1.0 - data)))


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)
    return _make(data, (a,), lambda g: _accumulate(a, g * (a.data > 0)))


SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


def selu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    x = a.data
    neg_part = SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
    data = SELU_LAMBDA * np.where(x > 0, x, neg_part)

    def vjp(g):
        local = np.where(x > 0, SELU_LAMBDA, SELU_LAMBDA * (neg_part + SELU_ALPHA))
        _accumulate(a, g * local)

    return _make(data, (a,), vjp)


# shape / reduction ops ----------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def vjp(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(data, (a, b), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)
    return _make(data, (a,), lambda g: _accumulate(a, g.reshape(a.data.shape)))


def swapaxes01(a: Tensor) -> Tensor:
    a = as_tensor(a)
    data = np.ascontiguousarray(np.swapaxes(a.data, 0, 1))
    return _make(data, (a,), lambda g: _accumulate(a, np.swapaxes(g, 0, 1)))


def _is_basic_index(idx) -> bool:
    if isinstance(idx, tuple):
        return all(_is_basic_index(i) for i in idx)
    return isinstance(idx, (int, np.integer, slice)) or idx is None or idx is Ellipsis


def getitem(a: Tensor, idx) -> Tensor:
    a = as_tensor(a)
    data = a.data[idx]

    if _is_basic_index(idx):
        # basic indexing never aliases, so += is safe and much faster
        def vjp(g):
            full = np.zeros_like(a.data)
            full[idx] += g
            _accumulate(a, full)
    else:
        def vjp(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accumulate(a, full)

    return _make(data, (a,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def vjp(g):
        offset = 0
        for t, s in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + s)
            _accumulate(t, g[tuple(sl)])
            offset += s

    return _make(data, tuple(tensors), vjp)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        slices = np.moveaxis(g, axis, 0)
        for t, gs in zip(tensors, slices):
            _accumulate(t, gs)

    return _make(data, tuple(tensors), vjp)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(data, (a,), vjp)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# fused / model-specific ops -----------------------------------------


def embedding(table: Tensor, indices) -> Tensor:
    """Row lookup ``table[indices]`` with scatter-add gradient into the rows."""
    table = as_tensor(table)
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexOutOfRange(
            f"embedding index out of range [0, {table.data.shape[0]}): "
            f"min={idx.min()}, max={idx.max()}"
        )
    data = table.data[idx]

    def vjp(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        _accumulate(table, full)

    return _make(data, (table,), vjp)


def dropout(a: Tensor, p: float, rng, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not train or p <= 0.0:
        return a
    a = as_tensor(a)
    keep = (rng.uniform(size=a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return mul(a, Tensor(keep))


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Per-row cross entropy in nats: ``-log softmax(logits)[target]``.

    Accepts ``(K,)`` logits with a scalar target or ``(N, K)`` with ``(N,)``
    targets; returns a tensor of per-row losses (scalar input gives shape
    ``()``).  The max-subtraction trick keeps the log-sum-exp stable.
    """
    logits = as_tensor(logits)
    squeeze = logits.data.ndim == 1
    x = logits.data[None, :] if squeeze else logits.data
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if x.ndim != 2 or t.shape != (x.shape[0],):
        raise ShapeMismatch(f"bad shapes: logits {logits.data.shape}, targets {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= x.shape[1]):
        raise IndexOutOfRange("target index outside logit dimension")
    m = x.max(axis=1, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(x.shape[0])
    losses = lse - shifted[rows, t]
    if squeeze:
        losses = losses.reshape(())

    def vjp(g):
        probs = np.exp(shifted - lse[:, None])
        probs[rows, t] -= 1.0
        g2 = np.atleast_1d(g)
        grad = probs * g2[:, None]
        _accumulate(logits, grad.reshape(logits.data.shape) if squeeze else grad)

    return _make(losses, (logits,), vjp)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Plain numpy softmax (no graph); used for free-running token sampling."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
