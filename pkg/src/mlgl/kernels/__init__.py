"""Kernel backend selection.

Set MLGL_KERNELS=compiled|fallback|auto (default auto) before import to
pick the backend.  The two produce bit-identical results; compiled only
saves time on the unfold/pool data movement.
"""
import os

from . import numpy_backend

_requested = os.environ.get("MLGL_KERNELS", "auto").lower()
if _requested not in ("auto", "compiled", "fallback"):
    raise ImportError(f"MLGL_KERNELS must be auto, compiled or fallback, not {_requested!r}")

_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _requested == "compiled":
            raise
if _impl is None:
    _impl = numpy_backend

backend_name = _impl.name
im2col = _impl.im2col
col2im = _impl.col2im
maxpool2d = _impl.maxpool2d
maxpool2d_grad = _impl.maxpool2d_grad
conv_out_size = numpy_backend.conv_out_size

__all__ = ["backend_name", "im2col", "col2im", "maxpool2d", "maxpool2d_grad", "conv_out_size"]
