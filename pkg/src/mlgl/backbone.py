"""Convolutional feature extractors for log-mel spectrograms."""
from __future__ import annotations

from . import tensor as T
from .modules import BatchNorm2d, Conv2d, Module, ModuleList
from .tensor import Tensor


class ConvUnit(Module):
    def __init__(self, c_in: int, c_out: int, rng, dtype):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, rng, dtype)
        self.bn = BatchNorm2d(c_out, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return T.relu(self.bn(self.conv(x)))


class Backbone(Module):
    """VGG-style stack: per block one or more 3x3 conv-BN-relu units, then a
    2x2 max pool; global average pooling flattens (N, C, H, W) to (N, C).

    channels is a list of per-block width lists, e.g. [[64], [128], [256, 256]].
    """

    def __init__(self, channels: list[list[int]], rng, dtype, in_channels: int = 1):
        super().__init__()
        if not channels or any(not block for block in channels):
            raise ValueError("channels must be a non-empty list of non-empty width lists")
        if any(not isinstance(w, int) or w < 1 for block in channels for w in block):
            raise ValueError("channel widths must be positive integers")
        self.blocks = ModuleList()
        c = in_channels
        for widths in channels:
            units = ModuleList()
            for w in widths:
                units.append(ConvUnit(c, w, rng, dtype))
                c = w
            self.blocks.append(units)
        self.out_dim = c

    def forward(self, x: Tensor) -> Tensor:
        for units in self.blocks:
            for unit in units:
                x = unit(x)
            x = T.maxpool2d(x, 2)
        return T.tmean(x, axis=(2, 3))
