# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend: im2col/col2im and 2x2 max (un)pooling.

Contract mirrors ``_kernels_np`` exactly, including the column ordering
(channel-major patches) and the first-maximum tie rule for pooling.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col(real[:, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef int c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef int ho = (h + 2 * pad - kh) // stride + 1
    cdef int wo = (w + 2 * pad - kw) // stride + 1
    out_np = np.empty((ho * wo, c * kh * kw), dtype=np.asarray(x).dtype)
    cdef real[:, ::1] out = out_np
    cdef int oi, oj, cc, i, j, ii, jj, row, col
    for oi in range(ho):
        for oj in range(wo):
            row = oi * wo + oj
            col = 0
            for cc in range(c):
                for i in range(kh):
                    ii = oi * stride + i - pad
                    for j in range(kw):
                        jj = oj * stride + j - pad
                        if 0 <= ii < h and 0 <= jj < w:
                            out[row, col] = x[cc, ii, jj]
                        else:
                            out[row, col] = 0
                        col += 1
    return out_np


def col2im(real[:, ::1] cols, int c, int h, int w, int kh, int kw, int stride, int pad):
    cdef int ho = (h + 2 * pad - kh) // stride + 1
    cdef int wo = (w + 2 * pad - kw) // stride + 1
    out_np = np.zeros((c, h, w), dtype=np.asarray(cols).dtype)
    cdef real[:, :, ::1] out = out_np
    cdef int oi, oj, cc, i, j, ii, jj, row, col
    for oi in range(ho):
        for oj in range(wo):
            row = oi * wo + oj
            col = 0
            for cc in range(c):
                for i in range(kh):
                    ii = oi * stride + i - pad
                    for j in range(kw):
                        jj = oj * stride + j - pad
                        if 0 <= ii < h and 0 <= jj < w:
                            out[cc, ii, jj] += cols[row, col]
                        col += 1
    return out_np


def maxpool2(real[:, :, ::1] x):
    cdef int c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef int ho = h // 2, wo = w // 2
    y_np = np.empty((c, ho, wo), dtype=np.asarray(x).dtype)
    idx_np = np.empty((c, ho, wo), dtype=np.uint8)
    cdef real[:, :, ::1] y = y_np
    cdef cnp.uint8_t[:, :, ::1] idx = idx_np
    cdef int cc, i, j, k, best
    cdef real v, vk
    for cc in range(c):
        for i in range(ho):
            for j in range(wo):
                best = 0
                v = x[cc, 2 * i, 2 * j]
                for k in range(1, 4):
                    vk = x[cc, 2 * i + (k >> 1), 2 * j + (k & 1)]
                    if vk > v:
                        v = vk
                        best = k
                y[cc, i, j] = v
                idx[cc, i, j] = <cnp.uint8_t> best
    return y_np, idx_np


def max_unpool2(real[:, :, ::1] x, cnp.uint8_t[:, :, ::1] idx):
    cdef int c = x.shape[0], ho = x.shape[1], wo = x.shape[2]
    out_np = np.zeros((c, 2 * ho, 2 * wo), dtype=np.asarray(x).dtype)
    cdef real[:, :, ::1] out = out_np
    cdef int cc, i, j, k
    for cc in range(c):
        for i in range(ho):
            for j in range(wo):
                k = idx[cc, i, j]
                out[cc, 2 * i + (k >> 1), 2 * j + (k & 1)] = x[cc, i, j]
    return out_np


def maxpool2_backward(real[:, :, ::1] dy, cnp.uint8_t[:, :, ::1] idx):
    return max_unpool2(dy, idx)


def max_unpool2_backward(real[:, :, ::1] dy, cnp.uint8_t[:, :, ::1] idx):
    cdef int c = dy.shape[0], h = dy.shape[1], w = dy.shape[2]
    cdef int ho = h // 2, wo = w // 2
    out_np = np.empty((c, ho, wo), dtype=np.asarray(dy).dtype)
    cdef real[:, :, ::1] out = out_np
    cdef int cc, i, j, k
    for cc in range(c):
        for i in range(ho):
            for j in range(wo):
                k = idx[cc, i, j]
                out[cc, i, j] = dy[cc, 2 * i + (k >> 1), 2 * j + (k & 1)]
    return out_np
