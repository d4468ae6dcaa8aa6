"""Differentiable ops over Tensors.

Array layout is channel-first: images and fields are (C, H, W), conv weights
(Cout, Cin, kh, kw), up-conv weights (Cin, Cout, 2, 2). Elementwise ops accept
equal shapes or a python scalar; nothing here broadcasts beyond that.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import Tensor, as_tensor, record


def _same_shape(a: Tensor, b: Tensor, what: str):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{what}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return record(a.data + b.data, (a, b), bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(-g)

    return record(a.data - b.data, (a, b), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * b.data)
        if b.requires_grad:
            b.accumulate(g * a.data)

    return record(a.data * b.data, (a, b), bwd)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "div")

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g / b.data)
        if b.requires_grad:
            b.accumulate(-g * a.data / (b.data * b.data))

    return record(a.data / b.data, (a, b), bwd)


def scale(a, c: float):
    a = as_tensor(a)

    def bwd(g):
        a.accumulate(g * c)

    return record(a.data * c, (a,), bwd)


def add_const(a, c: float):
    a = as_tensor(a)

    def bwd(g):
        a.accumulate(g)

    return record(a.data + c, (a,), bwd)


def neg(a):
    return scale(a, -1.0)


def log(a):
    a = as_tensor(a)

    def bwd(g):
        a.accumulate(g / a.data)

    return record(np.log(a.data), (a,), bwd)


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def bwd(g):
        a.accumulate(g * out_data)

    return record(out_data, (a,), bwd)


def clip_min(a, lo: float):
    """max(a, lo); zero gradient where the floor binds."""
    a = as_tensor(a)
    mask = a.data > lo

    def bwd(g):
        a.accumulate(g * mask)

    return record(np.maximum(a.data, lo), (a,), bwd)


def leaky_relu(a, slope: float = 0.01):
    a = as_tensor(a)
    dt = a.data.dtype.type
    coef = np.where(a.data > 0, dt(1.0), dt(slope))

    def bwd(g):
        a.accumulate(g * coef)

    return record(a.data * coef, (a,), bwd)


def tsum(a, axis=None):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.data.shape))
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            g_exp = np.expand_dims(g, axes)
            a.accumulate(np.broadcast_to(g_exp, a.data.shape))

    return record(out_data, (a,), bwd)


def tmean(a):
    a = as_tensor(a)
    n = a.data.size

    def bwd(g):
        a.accumulate(np.broadcast_to(g / n, a.data.shape))

    return record(a.data.mean(), (a,), bwd)


def reshape(a, shape):
    a = as_tensor(a)

    def bwd(g):
        a.accumulate(g.reshape(a.data.shape))

    return record(a.data.reshape(shape), (a,), bwd)


def concat_channels(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ca = a.data.shape[0]

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g[:ca])
        if b.requires_grad:
            b.accumulate(g[ca:])

    return record(np.concatenate([a.data, b.data], axis=0), (a, b), bwd)


def conv2d(x, w, b=None, stride: int = 1, pad: int = 1):
    """(Cin,H,W) * (Cout,Cin,kh,kw) -> (Cout,Ho,Wo), zero padding."""
    x, w = as_tensor(x), as_tensor(w)
    cout, cin, kh, kw = w.data.shape
    if x.data.shape[0] != cin:
        raise ValueError(f"conv2d: input has {x.data.shape[0]} channels, weight expects {cin}")
    _, h, wdt = x.data.shape
    cols = kernels.im2col(x.data, kh, kw, stride, pad)
    w2 = w.data.reshape(cout, cin * kh * kw)
    out2 = cols @ w2.T
    if b is not None:
        b = as_tensor(b)
        out2 = out2 + b.data[None, :]
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wdt + 2 * pad - kw) // stride + 1
    out_data = out2.T.reshape(cout, ho, wo)
    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        g2 = g.reshape(cout, ho * wo).T
        if b is not None and b.requires_grad:
            b.accumulate(g2.sum(axis=0))
        if w.requires_grad:
            w.accumulate((g2.T @ cols).reshape(w.data.shape))
        if x.requires_grad:
            dcols = np.ascontiguousarray(g2 @ w2)
            x.accumulate(kernels.col2im(dcols, cin, h, wdt, kh, kw, stride, pad))

    return record(np.ascontiguousarray(out_data), parents, bwd)


def conv2d_transpose2(x, w, b=None):
    """2x up-convolution: (Cin,H,W) * (Cin,Cout,2,2) -> (Cout,2H,2W).

    Kernel 2x2 at stride 2 tiles the output exactly, so this is a plain GEMM
    plus an interleaving reshape; no scatter needed.
    """
    x, w = as_tensor(x), as_tensor(w)
    cin, cout = w.data.shape[0], w.data.shape[1]
    if x.data.shape[0] != cin:
        raise ValueError(f"conv2d_transpose2: input has {x.data.shape[0]} channels, weight expects {cin}")
    _, h, wdt = x.data.shape
    p = h * wdt
    x2 = x.data.reshape(cin, p).T
    w2 = w.data.reshape(cin, cout * 4)
    out2 = x2 @ w2
    out_data = np.ascontiguousarray(
        out2.reshape(h, wdt, cout, 2, 2).transpose(2, 0, 3, 1, 4)
    ).reshape(cout, 2 * h, 2 * wdt)
    if b is not None:
        b = as_tensor(b)
        out_data = out_data + b.data[:, None, None]
    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=(1, 2)))
        g2 = np.ascontiguousarray(
            g.reshape(cout, h, 2, wdt, 2).transpose(1, 3, 0, 2, 4)
        ).reshape(p, cout * 4)
        if w.requires_grad:
            w.accumulate((x2.T @ g2).reshape(w.data.shape))
        if x.requires_grad:
            x.accumulate(np.ascontiguousarray((g2 @ w2.T).T).reshape(cin, h, wdt))

    return record(out_data, parents, bwd)


def maxpool2(x):
    x = as_tensor(x)
    c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2: extents must be even, got {(h, w)}")
    out_data, idx = kernels.maxpool2(x.data)

    def bwd(g):
        x.accumulate(kernels.maxpool2_backward(np.ascontiguousarray(g), idx))

    t = record(out_data, (x,), bwd)
    return t, idx


def max_unpool2(x, idx):
    x = as_tensor(x)

    def bwd(g):
        x.accumulate(kernels.max_unpool2_backward(np.ascontiguousarray(g), idx))

    return record(kernels.max_unpool2(x.data, idx), (x,), bwd)


def nn_upsample2(x):
    """Nearest-neighbor 2x upsample; backward sums each 2x2 block."""
    x = as_tensor(x)
    c, h, w = x.data.shape

    def bwd(g):
        x.accumulate(g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)))

    return record(np.ascontiguousarray(np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)), (x,), bwd)


def instance_norm(x, eps: float = 1e-5):
    """Per-channel normalization over the spatial axes, no affine."""
    x = as_tensor(x)
    mu = x.data.mean(axis=(1, 2), keepdims=True)
    var = x.data.var(axis=(1, 2), keepdims=True)
    istd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * istd

    def bwd(g):
        m1 = g.mean(axis=(1, 2), keepdims=True)
        m2 = (g * xhat).mean(axis=(1, 2), keepdims=True)
        x.accumulate(istd * (g - m1 - xhat * m2))

    return record(xhat, (x,), bwd)


def softmax_channels(x):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=0, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=0, keepdims=True)
        x.accumulate(y * (g - dot))

    return record(y, (x,), bwd)


def gather_label_probs(p, labels):
    """y[i,j] = p[labels[i,j], i, j] for an integer (H,W) label map."""
    p = as_tensor(p)
    lab = labels[None].astype(np.intp, copy=False)
    out_data = np.take_along_axis(p.data, lab, axis=0)[0]

    def bwd(g):
        dp = np.zeros_like(p.data)
        np.put_along_axis(dp, lab, g[None], axis=0)
        p.accumulate(dp)

    return record(out_data, (p,), bwd)


def _as_operand(other):
    if isinstance(other, Tensor):
        return other
    if np.isscalar(other):
        return float(other)
    return as_tensor(other)


def _t_add(self, other):
    o = _as_operand(other)
    return add_const(self, o) if isinstance(o, float) else add(self, o)


def _t_sub(self, other):
    o = _as_operand(other)
    return add_const(self, -o) if isinstance(o, float) else sub(self, o)


def _t_mul(self, other):
    o = _as_operand(other)
    return scale(self, o) if isinstance(o, float) else mul(self, o)


def _t_div(self, other):
    o = _as_operand(other)
    return scale(self, 1.0 / o) if isinstance(o, float) else div(self, o)


Tensor.__add__ = _t_add
Tensor.__radd__ = _t_add
Tensor.__sub__ = _t_sub
Tensor.__mul__ = _t_mul
Tensor.__rmul__ = _t_mul
Tensor.__truediv__ = _t_div
Tensor.__neg__ = neg
