from typing import Sequence

import torch
import torch.nn as nn

from radnas.exceptions import ShapeError
from radnas.nn_core.usconv import USConv2d

STEM_STRIDES = (2, 2, 1)


class Stem(nn.Module):
    """Three 3x3 elastic convs with strides (2, 2, 1): output at 1/4 scale."""

    def __init__(self, in_channels: int, widths: Sequence[int]):
        super().__init__()
        if len(widths) != 3:
            raise ValueError(f"stem takes three widths, got {list(widths)}")
        chans = [in_channels, *widths]
        self.layers = nn.ModuleList(
            USConv2d(chans[i], chans[i + 1], 3, stride=STEM_STRIDES[i]) for i in range(3)
        )

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    def forward(self, gray: torch.Tensor) -> torch.Tensor:
        h, w = gray.shape[-2:]
        if h % 4 or w % 4:
            raise ShapeError(f"stem input {h}x{w} is not divisible by 4")
        for layer in self.layers:
            gray = layer(gray)
        return gray


def stem_forward(gray: torch.Tensor, params: Stem) -> torch.Tensor:
    return params(gray)
