"""Multi-level graph learning for audio event tagging and annoyance prediction."""

__version__ = "0.1.0"

from .tensor import Tensor, no_grad

__all__ = ["Tensor", "no_grad", "__version__"]
