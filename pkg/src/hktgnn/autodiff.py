"""Dense float64 tensors with taped reverse-mode differentiation.

The op graph doubles as the tape: every non-leaf tensor keeps its parent
tensors plus a closure that pushes adjoints into them, and ``backward()``
replays those closures in reverse topological order exactly once. Only the
ops the model needs are provided (no GPU, no general broadcasting fusion).
"""

from __future__ import annotations

import math
import os

import numpy as np

_DEBUG = bool(os.environ.get("HKTGNN_DEBUG"))


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf screening of every op result (slow; meant for tests)."""
    global _DEBUG
    _DEBUG = bool(enabled)


class ShapeMismatch(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        """Backpropagate from a scalar output through the recorded tape."""
        if self.data.ndim != 0:
            raise ValueError(f"backward() expects a scalar, got shape {self.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite value produced by an op")
    return out


def _accumulate(t: Tensor, g) -> None:
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=np.float64)
    if g.shape != t.data.shape:
        g = g.reshape(t.data.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(a.data / b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, -g)

    return _node(-a.data, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra and structure ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim == 0 or b.ndim == 0 or a.ndim > 2 or b.ndim > 2:
        raise ShapeMismatch(f"matmul needs 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} @ {b.shape}")

    def backward(g):
        if a.ndim == 2 and b.ndim == 2:
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
        elif a.ndim == 1 and b.ndim == 2:
            _accumulate(a, b.data @ g)
            _accumulate(b, np.outer(a.data, g))
        elif a.ndim == 2 and b.ndim == 1:
            _accumulate(a, np.outer(g, b.data))
            _accumulate(b, a.data.T @ g)
        else:  # 1-D dot
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)

    return _node(a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeMismatch(f"transpose expects a matrix, got {a.shape}")

    def backward(g):
        _accumulate(a, g.T)

    return _node(a.data.T, (a,), backward)


def concat(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat of an empty sequence")
    ndim = parts[0].ndim
    for p in parts[1:]:
        if p.ndim != ndim:
            raise ShapeMismatch(
                f"concat rank mismatch: {parts[0].shape} vs {p.shape}"
            )
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        for p, piece in zip(parts, np.split(g, offsets, axis=axis)):
            _accumulate(p, piece)

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), backward)


def rows(a: Tensor, idx) -> Tensor:
    """Gather rows (or 1-D entries) by integer index; duplicates allowed."""
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        z = np.zeros_like(a.data)
        np.add.at(z, idx, g)
        _accumulate(a, z)

    return _node(a.data[idx], (a,), backward)


def column(a: Tensor, j: int) -> Tensor:
    if a.ndim != 2:
        raise ShapeMismatch(f"column expects a matrix, got {a.shape}")

    def backward(g):
        z = np.zeros_like(a.data)
        z[:, j] = g
        _accumulate(a, z)

    return _node(a.data[:, j].copy(), (a,), backward)


def scatter_rows(base: Tensor, idx, values: Tensor) -> Tensor:
    """Copy of ``base`` with rows ``idx`` replaced by ``values``; idx must be unique."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise ValueError("scatter_rows requires unique row indices")
    if values.shape != base.data[idx].shape:
        raise ShapeMismatch(
            f"scatter_rows values {values.shape} vs target {base.data[idx].shape}"
        )

    def backward(g):
        gb = g.copy()
        gb[idx] = 0.0
        _accumulate(base, gb)
        _accumulate(values, g[idx])

    out = base.data.copy()
    out[idx] = values.data
    return _node(out, (base, values), backward)


def repeat_rows(v: Tensor, n: int) -> Tensor:
    """Tile a vector into ``n`` identical rows."""
    if v.ndim != 1:
        raise ShapeMismatch(f"repeat_rows expects a vector, got {v.shape}")

    def backward(g):
        _accumulate(v, g.sum(axis=0))

    return _node(np.repeat(v.data[None, :], n, axis=0), (v,), backward)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), Tensor(1.0 / count))


def weighted_rowsum(a: Tensor, weights) -> Tensor:
    """sum_i w_i * row_i as a differentiable op (weights constant)."""
    return matmul(Tensor(np.asarray(weights, dtype=np.float64)), a)


def segment_sum(values: Tensor, segments, num_segments: int) -> Tensor:
    """Sum rows of ``values`` into buckets given by ``segments``."""
    segments = np.asarray(segments, dtype=np.int64)
    if len(segments) != values.shape[0]:
        raise ShapeMismatch(
            f"segment_sum: {values.shape[0]} rows vs {len(segments)} segment ids"
        )

    def backward(g):
        _accumulate(values, g[segments])

    out = np.zeros((num_segments,) + values.shape[1:], dtype=np.float64)
    np.add.at(out, segments, values.data)
    return _node(out, (values,), backward)


def stop_gradient(a: Tensor) -> Tensor:
    return Tensor(a.data.copy())


# ---------------------------------------------------------------------------
# nonlinearities


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return _node(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g / a.data)

    return _node(np.log(a.data), (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data > lo) & (a.data < hi)

    def backward(g):
        _accumulate(a, g * inside)

    return _node(np.clip(a.data, lo, hi), (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), backward)


def softsign(a: Tensor) -> Tensor:
    denom = 1.0 + np.abs(a.data)

    def backward(g):
        _accumulate(a, g / (denom * denom))

    return _node(a.data / denom, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    factor = np.where(a.data >= 0, 1.0, slope)

    def backward(g):
        _accumulate(a, g * factor)

    return _node(a.data * factor, (a,), backward)


def prelu(a: Tensor, slope: Tensor) -> Tensor:
    """PReLU with a learned scalar slope for the negative half-line."""
    if slope.ndim != 0:
        raise ShapeMismatch(f"prelu slope must be a scalar, got {slope.shape}")
    negative = a.data < 0

    def backward(g):
        _accumulate(a, g * np.where(negative, slope.data, 1.0))
        _accumulate(slope, np.sum(g * np.where(negative, a.data, 0.0)))

    out = np.where(negative, slope.data * a.data, a.data)
    return _node(out, (a, slope), backward)


# ---------------------------------------------------------------------------
# composites: attention normalization and losses


def segment_softmax(scores: Tensor, segments, num_segments: int) -> Tensor:
    """Softmax of 1-D scores within each segment (variable-size neighborhoods)."""
    segments = np.asarray(segments, dtype=np.int64)
    if scores.ndim != 1:
        raise ShapeMismatch(f"segment_softmax expects 1-D scores, got {scores.shape}")
    if scores.shape[0] == 0:
        return scores
    shift = np.full(num_segments, -np.inf)
    np.maximum.at(shift, segments, scores.data)
    e = exp(sub(scores, Tensor(shift[segments])))
    denom = segment_sum(e, segments, num_segments)
    return div(e, rows(denom, segments))


def softmax_rows(z: Tensor) -> Tensor:
    m = z.data.max(axis=1, keepdims=True)
    e = exp(sub(z, Tensor(m)))
    return div(e, tsum(e, axis=1, keepdims=True))


def squared_l2(v: Tensor) -> Tensor:
    return tsum(mul(v, v))


def binary_cross_entropy(probs: Tensor, targets) -> Tensor:
    """Mean BCE of probabilities against {0,1} targets, clamped at 1e-12."""
    t = np.asarray(targets, dtype=np.float64)
    p = clip(probs, 1e-12, 1.0 - 1e-12)
    ll = add(mul(Tensor(t), log(p)), mul(Tensor(1.0 - t), log(sub(Tensor(1.0), p))))
    return neg(tmean(ll))


def kl_divergence_rows(p: Tensor, q: Tensor) -> Tensor:
    """Mean over rows of KL(p_row || q_row) for categorical distributions."""
    if p.shape != q.shape:
        raise ShapeMismatch(f"kl_divergence_rows: {p.shape} vs {q.shape}")
    pc = clip(p, 1e-12, 1.0)
    qc = clip(q, 1e-12, 1.0)
    per_row = tsum(mul(pc, sub(log(pc), log(qc))), axis=1)
    return tmean(per_row)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Standard Adam over a fixed list of parameter tensors."""

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    scale = math.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, scale, size=shape if shape is not None else (fan_in, fan_out))
