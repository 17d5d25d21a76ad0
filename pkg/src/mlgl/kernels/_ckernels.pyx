# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled data-movement kernels.

Same contracts as numpy_backend (layouts, zero padding, first-max tie
rule, accumulation order), so both backends return bit-identical arrays;
only the loop machinery differs.
"""
import numpy as np

ctypedef fused floating:
    float
    double

name = "compiled"


def conv_out_size(Py_ssize_t size, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    return (size + 2 * pad - k) // stride + 1


def _im2col(floating[:, :, :, ::1] x, floating[:, :, ::1] out,
            Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw,
            Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = out.shape[2] // ((w + 2 * pw - kw) // sw + 1)
    cdef Py_ssize_t ow = (w + 2 * pw - kw) // sw + 1
    cdef Py_ssize_t ni, ci, i, j, a, b, row, r, s
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for a in range(oh):
                            r = a * sh + i - ph
                            for b in range(ow):
                                s = b * sw + j - pw
                                if 0 <= r < h and 0 <= s < w:
                                    out[ni, row, a * ow + b] = x[ni, ci, r, s]
                                else:
                                    out[ni, row, a * ow + b] = 0


def im2col(x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw,
           Py_ssize_t ph, Py_ssize_t pw):
    """Unfold (N, C, H, W) into (N, C*kh*kw, OH*OW) patch columns."""
    n, c, h, w = x.shape
    oh = conv_out_size(h, kh, sh, ph)
    ow = conv_out_size(w, kw, sw, pw)
    if oh <= 0 or ow <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{w} with pad {ph},{pw}")
    x = np.ascontiguousarray(x)
    out = np.empty((n, c * kh * kw, oh * ow), dtype=x.dtype)
    _im2col(x, out, kh, kw, sh, sw, ph, pw)
    return out


def _col2im(floating[:, :, ::1] cols, floating[:, :, :, ::1] gx,
            Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw,
            Py_ssize_t ph, Py_ssize_t pw, Py_ssize_t oh, Py_ssize_t ow):
    cdef Py_ssize_t n = gx.shape[0], c = gx.shape[1], h = gx.shape[2], w = gx.shape[3]
    cdef Py_ssize_t ni, ci, i, j, a, b, row, r, s
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for a in range(oh):
                            r = a * sh + i - ph
                            if r < 0 or r >= h:
                                continue
                            for b in range(ow):
                                s = b * sw + j - pw
                                if 0 <= s < w:
                                    gx[ni, ci, r, s] += cols[ni, row, a * ow + b]


def col2im(cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw,
           Py_ssize_t ph, Py_ssize_t pw):
    """Adjoint of im2col: scatter-add columns back onto an (N, C, H, W) grid."""
    oh = conv_out_size(h, kh, sh, ph)
    ow = conv_out_size(w, kw, sw, pw)
    cols = np.ascontiguousarray(cols)
    gx = np.zeros((n, c, h, w), dtype=cols.dtype)
    _col2im(cols, gx, kh, kw, sh, sw, ph, pw, oh, ow)
    return gx


def _maxpool(floating[:, :, :, ::1] x, floating[:, :, :, ::1] out,
             long long[:, :, :, ::1] idx, Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = out.shape[2], ow = out.shape[3]
    cdef Py_ssize_t ni, ci, a, b, i, j, r, s
    cdef floating best
    cdef Py_ssize_t besti
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for a in range(oh):
                    for b in range(ow):
                        best = x[ni, ci, a * kh, b * kw]
                        besti = (a * kh) * w + b * kw
                        for i in range(kh):
                            for j in range(kw):
                                r = a * kh + i
                                s = b * kw + j
                                if x[ni, ci, r, s] > best:
                                    best = x[ni, ci, r, s]
                                    besti = r * w + s
                        out[ni, ci, a, b] = best
                        idx[ni, ci, a, b] = besti


def maxpool2d(x, Py_ssize_t kh, Py_ssize_t kw):
    """Non-overlapping max pool; returns (out, idx) with flat H*W argmax."""
    n, c, h, w = x.shape
    oh, ow = h // kh, w // kw
    if oh == 0 or ow == 0:
        raise ValueError(f"pool {kh}x{kw} does not fit input {h}x{w}")
    x = np.ascontiguousarray(x)
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    idx = np.empty((n, c, oh, ow), dtype=np.int64)
    _maxpool(x, out, idx, kh, kw)
    return out, idx


def _maxpool_grad(floating[:, :, :, ::1] gout, long long[:, :, :, ::1] idx,
                  floating[:, :, ::1] gx):
    cdef Py_ssize_t n = gout.shape[0], c = gout.shape[1]
    cdef Py_ssize_t oh = gout.shape[2], ow = gout.shape[3]
    cdef Py_ssize_t ni, ci, a, b
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for a in range(oh):
                    for b in range(ow):
                        gx[ni, ci, idx[ni, ci, a, b]] = gout[ni, ci, a, b]


def maxpool2d_grad(gout, idx, Py_ssize_t h, Py_ssize_t w):
    """Route pooled gradients back to the argmax positions."""
    n, c, oh, ow = gout.shape
    gout = np.ascontiguousarray(gout)
    idx = np.ascontiguousarray(idx)
    gx = np.zeros((n, c, h * w), dtype=gout.dtype)
    _maxpool_grad(gout, idx, gx)
    return gx.reshape(n, c, h, w)
