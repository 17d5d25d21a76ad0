"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced: the parent
tensors and a closure that pushes its gradient onto them.  backward()
seeds the root with ones and runs the closures in reverse topological
order.  Parents are visited in recorded order and reductions reuse
numpy's fixed-order routines, so repeated runs give bit-identical
gradients.

Only float32 and float64 are supported.  Binary ops require matching
dtypes (python scalars are cast to the tensor's dtype); this keeps
accidental promotion from silently changing results between the f32
training path and the f64 verification path.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from . import kernels

Array = np.ndarray

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, metrics)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_push", "_backward_done")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype == np.float32 or arr.dtype == np.float64:
            pass
        elif arr.dtype.kind in "iub":
            arr = arr.astype(np.float64)
        else:
            raise TypeError(f"unsupported dtype {arr.dtype}")
        self.data = arr
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._push: Callable[[], None] | None = None
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.data.shape}")
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if self._backward_done:
            raise RuntimeError("backward() was already called on this tensor")
        self._backward_done = True
        self.grad = np.ones_like(self.data)
        for node in reversed(_topo_order(self)):
            if node._push is not None:
                node._push()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # convenience operators; the functional forms below are the real API
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order DFS; parents expanded in recorded order."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, i = stack.pop()
        if i == 0:
            if id(node) in visited:
                continue
            visited.add(id(node))
        if i < len(node._parents):
            stack.append((node, i + 1))
            child = node._parents[i]
            if id(child) not in visited:
                stack.append((child, 0))
        else:
            order.append(node)
    return order


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _check_dtypes(*tensors: Tensor):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise TypeError(f"mixed dtypes {dt} and {t.data.dtype}; cast explicitly")


def _from_op(data: Array, parents: Sequence[Tensor], push: Callable[[], None]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._push = push
    return out


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to the original shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _acc(t: Tensor, g: Array):
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    _check_dtypes(a, b)
    out = _from_op(a.data + b.data, (a, b), lambda: (_acc(a, out.grad), _acc(b, out.grad)))
    return out


def sub(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    _check_dtypes(a, b)
    out = _from_op(a.data - b.data, (a, b), lambda: (_acc(a, out.grad), _acc(b, -out.grad)))
    return out


def mul(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    _check_dtypes(a, b)
    out = _from_op(a.data * b.data, (a, b),
                   lambda: (_acc(a, out.grad * b.data), _acc(b, out.grad * a.data)))
    return out


def div(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    _check_dtypes(a, b)
    out = _from_op(a.data / b.data, (a, b),
                   lambda: (_acc(a, out.grad / b.data),
                            _acc(b, -out.grad * a.data / (b.data * b.data))))
    return out


def neg(a: Tensor) -> Tensor:
    out = _from_op(-a.data, (a,), lambda: _acc(a, -out.grad))
    return out


def relu(a: Tensor) -> Tensor:
    out = _from_op(np.maximum(a.data, 0), (a,),
                   lambda: _acc(a, out.grad * (a.data > 0)))
    return out


def sigmoid(a: Tensor) -> Tensor:
    # exp only ever sees non-positive arguments
    z = np.exp(-np.abs(a.data))
    s = np.where(a.data >= 0, 1 / (1 + z), z / (1 + z))
    out = _from_op(s, (a,), lambda: _acc(a, out.grad * s * (1 - s)))
    return out


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    out = _from_op(e, (a,), lambda: _acc(a, out.grad * e))
    return out


def log(a: Tensor) -> Tensor:
    out = _from_op(np.log(a.data), (a,), lambda: _acc(a, out.grad / a.data))
    return out


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    mask = (a.data >= lo) & (a.data <= hi)
    out = _from_op(np.clip(a.data, lo, hi), (a,), lambda: _acc(a, out.grad * mask))
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def push():
        g = out.grad
        _acc(a, (g - (g * s).sum(axis=axis, keepdims=True)) * s)

    out = _from_op(s, (a,), push)
    return out


# ---------------------------------------------------------------------------
# shape


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = _from_op(a.data.reshape(shape), (a,),
                   lambda: _acc(a, out.grad.reshape(a.data.shape)))
    return out


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    out = _from_op(np.ascontiguousarray(a.data.swapaxes(ax1, ax2)), (a,),
                   lambda: _acc(a, out.grad.swapaxes(ax1, ax2)))
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    axis = axis % a.data.ndim
    if start < 0 or start + length > a.data.shape[axis]:
        raise ValueError(f"narrow [{start}:{start + length}) outside axis of size {a.data.shape[axis]}")
    sl = tuple(slice(start, start + length) if i == axis else slice(None)
               for i in range(a.data.ndim))

    def push():
        g = np.zeros_like(a.data)
        g[sl] = out.grad
        _acc(a, g)

    out = _from_op(np.ascontiguousarray(a.data[sl]), (a,), push)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    _check_dtypes(*tensors)
    axis = axis % tensors[0].data.ndim
    sizes = [t.data.shape[axis] for t in tensors]

    def push():
        offset = 0
        for t, n in zip(tensors, sizes):
            sl = tuple(slice(offset, offset + n) if i == axis else slice(None)
                       for i in range(out.data.ndim))
            _acc(t, out.grad[sl])
            offset += n

    out = _from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, push)
    return out


# ---------------------------------------------------------------------------
# reductions


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.data.ndim)

    def push():
        g = out.grad
        if not keepdims:
            g = np.expand_dims(g, axes)
        _acc(a, np.broadcast_to(g, a.data.shape))

    out = _from_op(a.data.sum(axis=axes, keepdims=keepdims), (a,), push)
    return out


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.data.ndim)
    count = 1
    for ax in axes:
        count *= a.data.shape[ax]

    def push():
        g = out.grad
        if not keepdims:
            g = np.expand_dims(g, axes)
        _acc(a, np.broadcast_to(g, a.data.shape) / count)

    out = _from_op(a.data.mean(axis=axes, keepdims=keepdims), (a,), push)
    return out


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading dims."""
    _check_dtypes(a, b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul needs tensors with ndim >= 2")

    def push():
        g = out.grad
        _acc(a, np.matmul(g, b.data.swapaxes(-1, -2)))
        _acc(b, np.matmul(a.data.swapaxes(-1, -2), g))

    out = _from_op(np.matmul(a.data, b.data), (a, b), push)
    return out


# ---------------------------------------------------------------------------
# network ops


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 1) -> Tensor:
    """3x3-style convolution in NCHW via unfold + one BLAS product per sample."""
    _check_dtypes(x, w, b)
    n, cin, h, wd = x.data.shape
    oc, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ValueError(f"input has {cin} channels, weight expects {cin_w}")
    oh = kernels.conv_out_size(h, kh, stride, padding)
    ow = kernels.conv_out_size(wd, kw, stride, padding)
    cols = kernels.im2col(x.data, kh, kw, stride, stride, padding, padding)
    wm = w.data.reshape(oc, cin * kh * kw)
    prod = np.matmul(wm, cols) + b.data[:, None]

    def push():
        g = out.grad.reshape(n, oc, oh * ow)
        if w.requires_grad:
            gw = np.tensordot(g, cols, axes=([0, 2], [0, 2]))
            _acc(w, gw.reshape(w.data.shape))
        if b.requires_grad:
            _acc(b, g.sum(axis=(0, 2)))
        if x.requires_grad:
            gcols = np.matmul(wm.T, g)
            _acc(x, kernels.col2im(gcols, n, cin, h, wd, kh, kw, stride, stride,
                                   padding, padding))

    out = _from_op(prod.reshape(n, oc, oh, ow), (x, w, b), push)
    return out


def maxpool2d(x: Tensor, k: int = 2) -> Tensor:
    pooled, idx = kernels.maxpool2d(x.data, k, k)
    h, w = x.data.shape[2], x.data.shape[3]
    out = _from_op(pooled, (x,),
                   lambda: _acc(x, kernels.maxpool2d_grad(out.grad, idx, h, w)))
    return out


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor,
                 running_mean: Array, running_var: Array,
                 training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Channel-wise batch norm on NCHW.

    Training mode normalizes with batch statistics and updates the
    running buffers in place (torch convention: unbiased variance goes
    into the buffer).  Eval mode uses the buffers and is a pure affine
    map, so inference stays deterministic.
    """
    _check_dtypes(x, gamma, beta)
    axes = (0, 2, 3)
    c = x.data.shape[1]
    shape = (1, c, 1, 1)
    if training:
        m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if momentum > 0:
            unbiased = var * (m / (m - 1)) if m > 1 else var
            running_mean *= 1 - momentum
            running_mean += momentum * mu
            running_var *= 1 - momentum
            running_var += momentum * unbiased
        ivar = 1.0 / np.sqrt(var + eps)
        xc = x.data - mu.reshape(shape)
        xhat = xc * ivar.reshape(shape)

        def push():
            g = out.grad
            gam = gamma.data.reshape(shape)
            dxhat = g * gam
            if x.requires_grad:
                iv = ivar.reshape(shape)
                dvar = (dxhat * xc).sum(axis=axes, keepdims=True) * -0.5 * iv ** 3
                dmu = -(dxhat * iv).sum(axis=axes, keepdims=True) \
                    + dvar * (-2.0 / m) * xc.sum(axis=axes, keepdims=True)
                _acc(x, dxhat * iv + dvar * (2.0 / m) * xc + dmu / m)
            _acc(gamma, (g * xhat).sum(axis=axes))
            _acc(beta, g.sum(axis=axes))
    else:
        ivar_r = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean.reshape(shape)) * ivar_r.reshape(shape)

        def push():
            g = out.grad
            _acc(x, g * (gamma.data * ivar_r).reshape(shape))
            _acc(gamma, (g * xhat).sum(axis=axes))
            _acc(beta, g.sum(axis=axes))

    out = _from_op(xhat * gamma.data.reshape(shape) + beta.data.reshape(shape),
                   (x, gamma, beta), push)
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; caller passes rng only in training mode."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype)
    scale = 1.0 / (1.0 - p)
    out = _from_op(x.data * keep * scale, (x,),
                   lambda: _acc(x, out.grad * keep * scale))
    return out
