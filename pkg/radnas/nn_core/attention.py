"""Coordinate attention: direction-aware gates pooled along H and along W."""

import torch
import torch.nn as nn

from radnas.exceptions import ShapeError
from radnas.nn_core.usconv import USConv2d

REDUCTION = 8
MIN_MID_CHANNELS = 8


def attention_mid_channels(channels: int) -> int:
    return max(MIN_MID_CHANNELS, channels // REDUCTION)


class CoordinateAttention(nn.Module):
    """Width-elastic: gates are produced for however many channels the input has."""

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.mid_channels = attention_mid_channels(channels)
        # joint bottleneck: conv + norm + SiLU
        self.conv1 = USConv2d(channels, self.mid_channels, 1, bias=False, norm=True, act=True)
        self.conv_h = USConv2d(self.mid_channels, channels, 1, bias=True, norm=False, act=False)
        self.conv_w = USConv2d(self.mid_channels, channels, 1, bias=True, norm=False, act=False)

    def gates(self, x: torch.Tensor):
        n, c, h, w = x.shape
        if c < 1:
            raise ShapeError("coordinate attention needs at least one channel")
        pooled_h = x.mean(dim=3, keepdim=True)  # [n, c, h, 1]
        pooled_w = x.mean(dim=2, keepdim=True).permute(0, 1, 3, 2)  # [n, c, w, 1]
        # bottleneck width follows the active channel count, so a sliced layer matches a narrower one
        mid = min(self.mid_channels, attention_mid_channels(c))
        y = self.conv1(torch.cat([pooled_h, pooled_w], dim=2), out_channels=mid)
        y_h, y_w = torch.split(y, [h, w], dim=2)
        g_h = torch.sigmoid(self.conv_h(y_h, out_channels=c))
        g_w = torch.sigmoid(self.conv_w(y_w.permute(0, 1, 3, 2), out_channels=c))
        return g_h, g_w

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        g_h, g_w = self.gates(x)
        return x * g_h * g_w


def coordinate_attention(x: torch.Tensor, params: CoordinateAttention) -> torch.Tensor:
    return params(x)
