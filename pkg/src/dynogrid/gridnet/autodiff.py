"""Minimal reverse-mode differentiation engine on float64 numpy arrays.

A Tensor records the op that produced it and closures that push gradients to
its parents; calling backward() on a scalar runs the tape in reverse
topological order. Only the ops the BEV dynamic-grid model needs are
implemented; everything is single-sample (no batch axis).
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fns")

    def __init__(self, data, requires_grad: bool = False, parents=(), grad_fns=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._grad_fns = grad_fns

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            g = node.grad
            if g is None:
                continue
            for parent, fn in zip(node._parents, node._grad_fns):
                if not parent.requires_grad or fn is None:
                    continue
                contrib = fn(g)
                if parent.grad is None:
                    parent.grad = contrib.copy() if isinstance(contrib, np.ndarray) else np.asarray(contrib)
                else:
                    parent.grad += contrib

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out axes that broadcasting added or expanded."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return Tensor(
        a.data + b.data,
        parents=(a, b),
        grad_fns=(lambda g: _unbroadcast(g, a.data.shape), lambda g: _unbroadcast(g, b.data.shape)),
    )


def neg(a) -> Tensor:
    a = _lift(a)
    return Tensor(-a.data, parents=(a,), grad_fns=(lambda g: -g,))


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return Tensor(
        a.data * b.data,
        parents=(a, b),
        grad_fns=(
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return Tensor(
        a.data / b.data,
        parents=(a, b),
        grad_fns=(
            lambda g: _unbroadcast(g / b.data, a.data.shape),
            lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    return Tensor(
        a.data @ b.data,
        parents=(a, b),
        grad_fns=(lambda g: g @ b.data.T, lambda g: a.data.T @ g),
    )


def tanh(a) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.data)
    return Tensor(out, parents=(a,), grad_fns=(lambda g: g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = _lift(a)
    z = np.exp(-np.abs(a.data))  # stable form, no overflow on large inputs
    out = np.where(a.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return Tensor(out, parents=(a,), grad_fns=(lambda g: g * out * (1.0 - out),))


def log(a) -> Tensor:
    a = _lift(a)
    return Tensor(np.log(a.data), parents=(a,), grad_fns=(lambda g: g / a.data,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only where the input was inside [lo, hi]."""
    a = _lift(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor(np.clip(a.data, lo, hi), parents=(a,), grad_fns=(lambda g: g * inside,))


def tsum(a) -> Tensor:
    a = _lift(a)
    return Tensor(a.data.sum(), parents=(a,), grad_fns=(lambda g: np.broadcast_to(g, a.data.shape).copy(),))


def tmean(a) -> Tensor:
    a = _lift(a)
    n = a.data.size
    return Tensor(
        a.data.mean(), parents=(a,), grad_fns=(lambda g: np.broadcast_to(g / n, a.data.shape).copy(),)
    )


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    return Tensor(a.data.reshape(shape), parents=(a,), grad_fns=(lambda g: g.reshape(a.data.shape),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def make_fn(i):
        def fn(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            return g[tuple(sl)]

        return fn

    return Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        parents=tuple(tensors),
        grad_fns=tuple(make_fn(i) for i in range(len(tensors))),
    )


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    a = _lift(a)
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def fn(g):
        out = np.zeros_like(a.data)
        out[sl] = g
        return out

    return Tensor(a.data[sl].copy(), parents=(a,), grad_fns=(fn,))


def max_axis(a, axis: int) -> Tensor:
    """Max reduction; gradient flows to the first argmax along the axis."""
    a = _lift(a)
    am = np.expand_dims(a.data.argmax(axis=axis), axis)
    out = np.take_along_axis(a.data, am, axis=axis).squeeze(axis)

    def fn(g):
        gx = np.zeros_like(a.data)
        np.put_along_axis(gx, am, np.expand_dims(g, axis), axis=axis)
        return gx

    return Tensor(out, parents=(a,), grad_fns=(fn,))


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    c = xp.shape[0]
    cols = np.empty((k, k, c, ho, wo))
    for ki in range(k):
        for kj in range(k):
            cols[ki, kj] = xp[:, ki : ki + (ho - 1) * stride + 1 : stride, kj : kj + (wo - 1) * stride + 1 : stride]
    # (ho*wo, c*k*k) with channel-major patches to match w.reshape(C_out, -1)
    return cols.transpose(3, 4, 2, 0, 1).reshape(ho * wo, c * k * k)


def conv2d(x, w, b, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution of a (C_in, H, W) map with (C_out, C_in, k, k) filters."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    c_in, h, wd = x.data.shape
    c_out, c_in2, k, _ = w.data.shape
    if c_in != c_in2:
        raise ValueError("conv2d channel mismatch")
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    cols = _im2col(xp, k, stride, ho, wo)
    out = cols @ w.data.reshape(c_out, -1).T + b.data
    out = out.reshape(ho, wo, c_out).transpose(2, 0, 1)

    def fn_x(g):
        gflat = g.transpose(1, 2, 0).reshape(ho * wo, c_out)
        dcols = gflat @ w.data.reshape(c_out, -1)
        dcols = dcols.reshape(ho, wo, c_in, k, k).transpose(3, 4, 2, 0, 1)
        dxp = np.zeros_like(xp)
        for ki in range(k):
            for kj in range(k):
                dxp[:, ki : ki + (ho - 1) * stride + 1 : stride, kj : kj + (wo - 1) * stride + 1 : stride] += dcols[ki, kj]
        if pad:
            return dxp[:, pad:-pad, pad:-pad]
        return dxp

    def fn_w(g):
        gflat = g.transpose(1, 2, 0).reshape(ho * wo, c_out)
        return (gflat.T @ cols).reshape(w.data.shape)

    def fn_b(g):
        return g.sum(axis=(1, 2))

    return Tensor(out, parents=(x, w, b), grad_fns=(fn_x, fn_w, fn_b))


def upsample_to(x, out_h: int, out_w: int) -> Tensor:
    """Nearest-neighbor resize of a (C, h, w) map to (C, out_h, out_w)."""
    x = _lift(x)
    c, h, w = x.data.shape
    src_i = (np.arange(out_h) * h) // out_h
    src_j = (np.arange(out_w) * w) // out_w
    out = x.data[:, src_i[:, None], src_j[None, :]]

    def fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), src_i[:, None], src_j[None, :]), g)
        return gx

    return Tensor(out, parents=(x,), grad_fns=(fn,))


def scatter_cells(features, ix: np.ndarray, iy: np.ndarray, n: int) -> Tensor:
    """Place per-cell feature rows (P, C) into a dense (C, n, n) map at the
    given unique cell indices; untouched cells stay zero."""
    features = _lift(features)
    p, c = features.data.shape
    out = np.zeros((c, n, n))
    out[:, ix, iy] = features.data.T

    def fn(g):
        return g[:, ix, iy].T

    return Tensor(out, parents=(features,), grad_fns=(fn,))
