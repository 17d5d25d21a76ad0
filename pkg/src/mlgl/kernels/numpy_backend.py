"""Pure-numpy implementations of the data-movement kernels.

These mirror the compiled versions in _ckernels exactly: both backends
only rearrange or scatter-add values, so outputs are bit-identical.
All shapes are NCHW and arrays must be C-contiguous.
"""
import numpy as np

name = "fallback"


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, sh, sw, ph, pw):
    """Unfold (N, C, H, W) into (N, C*kh*kw, OH*OW) patch columns."""
    n, c, h, w = x.shape
    oh = conv_out_size(h, kh, sh, ph)
    ow = conv_out_size(w, kw, sw, pw)
    if oh <= 0 or ow <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{w} with pad {ph},{pw}")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * kh * kw, oh * ow)


def col2im(cols, n, c, h, w, kh, kw, sh, sw, ph, pw):
    """Adjoint of im2col: scatter-add columns back onto an (N, C, H, W) grid."""
    oh = conv_out_size(h, kh, sh, ph)
    ow = conv_out_size(w, kw, sw, pw)
    c6 = cols.reshape(n, c, kh, kw, oh, ow)
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    # fixed (i, j) order; within one offset the strided writes never overlap
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw] += c6[:, :, i, j]
    return np.ascontiguousarray(xp[:, :, ph:ph + h, pw:pw + w])


def maxpool2d(x, kh, kw):
    """Non-overlapping max pool (stride == kernel); trailing rows/cols that
    do not fill a window are dropped.

    Returns (out, idx); idx holds the flat H*W position of each window's
    first maximum, so ties resolve identically in both backends.
    """
    n, c, h, w = x.shape
    oh, ow = h // kh, w // kw
    if oh == 0 or ow == 0:
        raise ValueError(f"pool {kh}x{kw} does not fit input {h}x{w}")
    v = x[:, :, :oh * kh, :ow * kw].reshape(n, c, oh, kh, ow, kw)
    v = np.ascontiguousarray(v.transpose(0, 1, 2, 4, 3, 5)).reshape(n, c, oh, ow, kh * kw)
    a = v.argmax(axis=-1)
    out = np.take_along_axis(v, a[..., None], axis=-1)[..., 0]
    rows = np.arange(oh)[:, None] * kh + a // kw
    cols = np.arange(ow)[None, :] * kw + a % kw
    idx = (rows * w + cols).astype(np.int64)
    return np.ascontiguousarray(out), np.ascontiguousarray(idx)


def maxpool2d_grad(gout, idx, h, w):
    """Route pooled gradients back to the argmax positions."""
    n, c, oh, ow = gout.shape
    gx = np.zeros((n, c, h * w), dtype=gout.dtype)
    np.put_along_axis(gx, idx.reshape(n, c, oh * ow), gout.reshape(n, c, oh * ow), axis=2)
    return gx.reshape(n, c, h, w)
