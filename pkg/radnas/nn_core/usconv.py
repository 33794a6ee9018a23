"""
Uniform-sampling convolution: a conv + batch-norm + SiLU layer whose active
channel counts are prefixes of its full-width parameters.
"""

import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from radnas.exceptions import ShapeError


def realize_channels(fraction: float, max_channels: int) -> int:
    """Channels kept for a width fraction: max(1, round-half-up(fraction * max_channels))."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"width fraction must lie in (0, 1], got {fraction}")
    return max(1, int(math.floor(fraction * max_channels + 0.5)))


class USConv2d(nn.Module):
    """Elastic conv layer.

    The input may be made of `in_groups` equal concatenated groups (e.g. the
    two halves of a CSP merge); each group is sliced by prefix independently.
    Input width follows the incoming tensor, output width follows
    `active_out` unless `out_channels` is passed to `forward`.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 1,
        stride: int = 1,
        in_groups: int = 1,
        bias: bool = False,
        norm: bool = True,
        act: bool = True,
        eps: float = 1e-3,
        momentum: Optional[float] = 0.03,
    ):
        super().__init__()
        if in_channels < 1 or out_channels < 1:
            raise ShapeError(f"USConv2d needs at least one channel, got {in_channels}->{out_channels}")
        if in_channels % in_groups:
            raise ShapeError(f"{in_channels} input channels do not split into {in_groups} groups")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = kernel_size // 2
        self.in_groups = in_groups
        self.eps = eps
        self.momentum = momentum
        self.use_act = act
        self.active_out = out_channels

        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.empty(out_channels)) if bias else None
        if norm:
            self.norm_weight = nn.Parameter(torch.ones(out_channels))
            self.norm_bias = nn.Parameter(torch.zeros(out_channels))
            self.register_buffer("running_mean", torch.zeros(out_channels))
            self.register_buffer("running_var", torch.ones(out_channels))
            self.register_buffer("num_batches_tracked", torch.tensor(0, dtype=torch.long))
        else:
            self.norm_weight = None
            self.norm_bias = None
        self.reset_parameters()

    @property
    def has_norm(self) -> bool:
        return self.norm_weight is not None

    @property
    def group_width(self) -> int:
        return self.in_channels // self.in_groups

    def reset_parameters(self) -> None:
        # same scheme as nn.Conv2d
        nn.init.kaiming_uniform_(self.weight, a=math.sqrt(5))
        if self.bias is not None:
            fan_in = self.in_channels * self.kernel_size * self.kernel_size
            bound = 1.0 / math.sqrt(fan_in)
            nn.init.uniform_(self.bias, -bound, bound)

    def reset_running_stats(self) -> None:
        if self.has_norm:
            self.running_mean.zero_()
            self.running_var.fill_(1.0)
            self.num_batches_tracked.zero_()

    def set_active(self, out_channels: int) -> None:
        if not 1 <= out_channels <= self.out_channels:
            raise ShapeError(f"active width {out_channels} outside [1, {self.out_channels}]")
        self.active_out = out_channels

    def _in_slice(self, tensor: torch.Tensor, in_channels: int) -> torch.Tensor:
        """Slice dim 1 of a [out, in, ...] tensor down to `in_channels` respecting groups."""
        if in_channels % self.in_groups:
            raise ShapeError(f"{in_channels} input channels do not split into {self.in_groups} groups")
        per_group = in_channels // self.in_groups
        if per_group > self.group_width:
            raise ShapeError(f"input has {in_channels} channels, layer accepts at most {self.in_channels}")
        if self.in_groups == 1:
            return tensor[:, :per_group]
        parts = [tensor[:, g * self.group_width : g * self.group_width + per_group] for g in range(self.in_groups)]
        return torch.cat(parts, dim=1)

    def sliced_weight(self, in_channels: int, out_channels: int) -> torch.Tensor:
        return self._in_slice(self.weight[:out_channels], in_channels)

    def forward(self, x: torch.Tensor, out_channels: Optional[int] = None) -> torch.Tensor:
        out_channels = self.active_out if out_channels is None else out_channels
        if out_channels > self.out_channels:
            raise ShapeError(f"requested {out_channels} output channels, layer has {self.out_channels}")
        weight = self.sliced_weight(x.shape[1], out_channels)
        bias = self.bias[:out_channels] if self.bias is not None else None
        y = F.conv2d(x, weight, bias, self.stride, self.padding)
        if self.has_norm:
            if self.training:
                self.num_batches_tracked.add_(1)
                factor = 1.0 / float(self.num_batches_tracked) if self.momentum is None else self.momentum
            else:
                factor = 0.0
            y = F.batch_norm(
                y,
                self.running_mean[:out_channels],
                self.running_var[:out_channels],
                self.norm_weight[:out_channels],
                self.norm_bias[:out_channels],
                self.training,
                factor,
                self.eps,
            )
        return F.silu(y) if self.use_act else y

    @torch.no_grad()
    def copy_sliced_from(self, source: "USConv2d") -> None:
        """Load this (smaller) layer's full tensors from the matching prefix slices of `source`."""
        if self.in_groups != source.in_groups or self.kernel_size != source.kernel_size:
            raise ShapeError("cannot inherit weights across differently shaped layers")
        self.weight.copy_(source.sliced_weight(self.in_channels, self.out_channels))
        if self.bias is not None:
            self.bias.copy_(source.bias[: self.out_channels])
        if self.has_norm:
            self.norm_weight.copy_(source.norm_weight[: self.out_channels])
            self.norm_bias.copy_(source.norm_bias[: self.out_channels])
            self.running_mean.copy_(source.running_mean[: self.out_channels])
            self.running_var.copy_(source.running_var[: self.out_channels])
            self.num_batches_tracked.copy_(source.num_batches_tracked)

    def extra_repr(self) -> str:
        return (
            f"{self.in_channels}, {self.out_channels}, k={self.kernel_size}, s={self.stride}, "
            f"groups_in={self.in_groups}, bias={self.bias is not None}, norm={self.has_norm}, act={self.use_act}"
        )


def usconv_forward(x: torch.Tensor, layer: USConv2d, in_fraction: float, out_fraction: float) -> torch.Tensor:
    """Run `layer` at the widths selected by two fractions of its full size."""
    expected_in = realize_channels(in_fraction, layer.in_channels)
    if x.shape[1] != expected_in:
        raise ShapeError(f"input has {x.shape[1]} channels but in_fraction {in_fraction} selects {expected_in}")
    return layer(x, out_channels=realize_channels(out_fraction, layer.out_channels))
