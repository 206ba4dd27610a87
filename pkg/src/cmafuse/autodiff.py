"""Minimal reverse-mode autodiff over numpy arrays.

Just enough machinery to train the fusion models: 2-D matmul, elementwise
nonlinearities, row softmax, row/column slicing and stacking, dropout, and a
weighted cross-entropy head. Tensors default to float32; build graphs in
float64 for finite-difference checking.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape construction (cheap eval-mode forward passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


def _make(data, parents, backward_fn) -> Tensor:
    """Wrap an op result; the tape node exists only if some parent needs grad."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into t.grad for every reachable tensor."""
    if loss.data.ndim != 0:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")

    # Iterative topological order (graphs can be ~1e3 nodes deep).
    order, visited, stack = [], set(), [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    loss.accumulate(np.ones((), dtype=loss.data.dtype))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# --- primitives ------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also supports broadcasting a (d,) bias over (n, d)."""
    data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g if a.data.shape == g.shape else g.sum(axis=0))
        if b.requires_grad:
            b.accumulate(g if b.data.shape == g.shape else g.sum(axis=0))

    return _make(data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch {a.shape} vs {b.shape}")

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * b.data)
        if b.requires_grad:
            b.accumulate(g * a.data)

    return _make(data, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    data = a.data * s

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * s)

    return _make(data, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return _make(data, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    def bwd(g):
        if a.requires_grad:
            a.accumulate(np.ascontiguousarray(g.T))

    return _make(a.data.T, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * mask)

    return _make(a.data * mask, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * y * (1.0 - y))

    return _make(y, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * (1.0 - y * y))

    return _make(y, (a,), bwd)


def square(a: Tensor) -> Tensor:
    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * 2.0 * a.data)

    return _make(a.data * a.data, (a,), bwd)


def absolute(a: Tensor) -> Tensor:
    s = np.sign(a.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * s)

    return _make(np.abs(a.data), (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        if a.requires_grad:
            a.accumulate(np.full_like(a.data, g))

    return _make(a.data.sum(), (a,), bwd)


def mean_rows(a: Tensor) -> Tensor:
    """(n, d) -> (1, d) row average (pooling for multi-row attention queries)."""
    n = a.data.shape[0]
    data = a.data.mean(axis=0, keepdims=True)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(np.repeat(g / n, n, axis=0))

    return _make(data, (a,), bwd)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction stabilization."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        if a.requires_grad:
            dot = (g * y).sum(axis=-1, keepdims=True)
            a.accumulate(y * (g - dot))

    return _make(y, (a,), bwd)


def concat_rows(parts) -> Tensor:
    parts = list(parts)
    data = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate(g[lo:hi])

    return _make(data, tuple(parts), bwd)


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    data = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.data.shape[1] for p in parts])

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate(g[:, lo:hi])

    return _make(data, tuple(parts), bwd)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[start:stop] = g
            a.accumulate(full)

    return _make(a.data[start:stop], (a,), bwd)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[:, start:stop] = g
            a.accumulate(full)

    return _make(a.data[:, start:stop], (a,), bwd)


def lstm_cell(gates: Tensor, c_prev: Tensor) -> Tensor:
    """One fused LSTM step from pre-activation gates (B, 4H), order i,f,g,o.

    Returns [h | c_new] as a (B, 2H) tensor; callers slice the halves. Fusing
    the gate nonlinearities and state update into one tape node keeps the
    100-step recurrence cheap.
    """
    B, four_h = gates.data.shape
    H = four_h // 4
    z = gates.data
    i = 1.0 / (1.0 + np.exp(-z[:, :H]))
    f = 1.0 / (1.0 + np.exp(-z[:, H : 2 * H]))
    g = np.tanh(z[:, 2 * H : 3 * H])
    o = 1.0 / (1.0 + np.exp(-z[:, 3 * H :]))
    c_new = f * c_prev.data + i * g
    tanh_c = np.tanh(c_new)
    h = o * tanh_c
    data = np.concatenate([h, c_new], axis=1)

    def bwd(grad):
        gh, gc = grad[:, :H], grad[:, H:]
        gc_total = gc + gh * o * (1.0 - tanh_c * tanh_c)
        if gates.requires_grad:
            dz = np.empty_like(z)
            dz[:, :H] = gc_total * g * i * (1.0 - i)
            dz[:, H : 2 * H] = gc_total * c_prev.data * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = gc_total * i * (1.0 - g * g)
            dz[:, 3 * H :] = gh * tanh_c * o * (1.0 - o)
            gates.accumulate(dz)
        if c_prev.requires_grad:
            c_prev.accumulate(gc_total * f)

    return _make(data, (gates, c_prev), bwd)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    keep = keep.astype(a.data.dtype)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * keep)

    return _make(a.data * keep, (a,), bwd)


def weighted_cross_entropy(logits: Tensor, labels, class_weights) -> Tensor:
    """Mean over the batch of w[y_i] * (-log softmax(logits_i)[y_i]).

    Log-sum-exp stabilized; gradient w[y]/n * (softmax - onehot).
    """
    labels = np.asarray(labels)
    w = np.asarray(class_weights, dtype=logits.data.dtype)
    n = logits.data.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    picked = z[np.arange(n), labels]
    wy = w[labels]
    data = np.asarray((wy * (lse - picked)).mean(), dtype=logits.data.dtype)

    def bwd(g):
        if logits.requires_grad:
            p = np.exp(z - m)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(n), labels] -= 1.0
            logits.accumulate(g * (wy / n)[:, None] * p)

    return _make(data, (logits,), bwd)


def softmax(x, axis=-1):
    """Plain numpy stabilized softmax (value-level utility, no tape)."""
    x = np.asarray(x, dtype=np.float64 if np.asarray(x).dtype == np.float64 else np.float32)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def sqrt_dim_scale(d: int) -> float:
    return 1.0 / math.sqrt(d)
