"""Pure-numpy kernel backend.

Same contract as the compiled backend in ``_kernels_cy``: images are
(C, H, W) C-contiguous float32/float64 arrays, column matrices are
(Ho*Wo, C*kh*kw) with the patch axis ordered channel-major.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_extent(h, kh, stride, pad):
    return (h + 2 * pad - kh) // stride + 1


def im2col(x, kh, kw, stride, pad):
    c, h, w = x.shape
    if pad > 0:
        xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, pad : pad + h, pad : pad + w] = x
    else:
        xp = x
    ho = _out_extent(h, kh, stride, pad)
    wo = _out_extent(w, kw, stride, pad)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4)).reshape(ho * wo, c * kh * kw)


def col2im(cols, c, h, w, kh, kw, stride, pad):
    ho = _out_extent(h, kh, stride, pad)
    wo = _out_extent(w, kw, stride, pad)
    acc = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    patches = cols.reshape(ho, wo, c, kh, kw).transpose(2, 3, 4, 0, 1)
    for i in range(kh):
        for j in range(kw):
            acc[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += patches[:, i, j]
    if pad > 0:
        return np.ascontiguousarray(acc[:, pad : pad + h, pad : pad + w])
    return acc


def maxpool2(x):
    """2x2/stride-2 max pool. Returns (pooled, idx) with idx in {0..3} = 2*di+dj.

    Ties resolve to the first maximum in row-major window order, matching argmax.
    """
    c, h, w = x.shape
    v = np.ascontiguousarray(
        x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    ).reshape(c, h // 2, w // 2, 4)
    idx = v.argmax(axis=3).astype(np.uint8)
    y = np.take_along_axis(v, idx[..., None].astype(np.intp), axis=3)[..., 0]
    return np.ascontiguousarray(y), idx


def max_unpool2(x, idx):
    """Place each value at its recorded position inside a 2x2 block, zeros elsewhere."""
    c, ho, wo = x.shape
    out4 = np.zeros((c, ho, wo, 4), dtype=x.dtype)
    np.put_along_axis(out4, idx[..., None].astype(np.intp), x[..., None], axis=3)
    return np.ascontiguousarray(
        out4.reshape(c, ho, wo, 2, 2).transpose(0, 1, 3, 2, 4)
    ).reshape(c, 2 * ho, 2 * wo)


def maxpool2_backward(dy, idx):
    return max_unpool2(dy, idx)


def max_unpool2_backward(dy, idx):
    c, h, w = dy.shape
    v = np.ascontiguousarray(
        dy.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    ).reshape(c, h // 2, w // 2, 4)
    return np.ascontiguousarray(np.take_along_axis(v, idx[..., None].astype(np.intp), axis=3)[..., 0])
