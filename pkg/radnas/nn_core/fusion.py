"""
Primary-auxiliary fusion and the Exchanger module built on it.

Fusion options:
  1: w = sigmoid(gamma * GAP(F_aux)) per channel, out = primary + w * F_aux
  2: out = primary + F_aux
  3: out = primary + lam * F_aux
where F_aux is the 1x1-projected auxiliary map resized bilinearly to the
primary's spatial size.
"""

from typing import Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from radnas.exceptions import ShapeError
from radnas.nn_core.attention import CoordinateAttention
from radnas.nn_core.usconv import USConv2d

FUSION_OPTIONS = (1, 2, 3)


class PrimaryAuxFusion(nn.Module):
    def __init__(self, primary_channels: int, aux_channels: int, options: Sequence[int] = FUSION_OPTIONS):
        super().__init__()
        options = tuple(sorted(set(options)))
        if not options or any(o not in FUSION_OPTIONS for o in options):
            raise ValueError(f"fusion options must be a subset of {FUSION_OPTIONS}, got {options}")
        self.options = options
        self.option = options[0]
        self.aux_proj = USConv2d(aux_channels, primary_channels, 1, bias=True, norm=False, act=False)
        self.gamma = nn.Parameter(torch.zeros(())) if 1 in options else None
        self.lam = nn.Parameter(torch.zeros(())) if 3 in options else None

    def set_option(self, option: int) -> None:
        if option not in self.options:
            raise ValueError(f"fusion option {option} not built into this module (has {self.options})")
        self.option = option

    def project(self, primary: torch.Tensor, aux: torch.Tensor) -> torch.Tensor:
        f_aux = self.aux_proj(aux, out_channels=primary.shape[1])
        if f_aux.shape[-2:] != primary.shape[-2:]:
            f_aux = F.interpolate(f_aux, size=primary.shape[-2:], mode="bilinear", align_corners=False)
        return f_aux

    def weighting(self, f_aux: torch.Tensor) -> torch.Tensor:
        """Per-channel factor w in (0, 1), shaped [N, C]."""
        return torch.sigmoid(self.gamma * f_aux.mean(dim=(2, 3)))

    def forward(self, primary: torch.Tensor, aux: torch.Tensor, option: Optional[int] = None) -> torch.Tensor:
        option = self.option if option is None else option
        if option not in self.options:
            raise ValueError(f"fusion option {option} not built into this module (has {self.options})")
        f_aux = self.project(primary, aux)
        if option == 1:
            return primary + self.weighting(f_aux)[:, :, None, None] * f_aux
        if option == 2:
            return primary + f_aux
        return primary + self.lam * f_aux


def primary_aux_fuse(primary: torch.Tensor, aux: torch.Tensor, option: int, params: PrimaryAuxFusion) -> torch.Tensor:
    return params(primary, aux, option=option)


class Exchanger(nn.Module):
    """Mode 1 updates the heat (backbone) stream from gray; mode 2 the reverse.

    updated_primary = primary + alpha * Attention(fuse(primary, aux))
    """

    def __init__(
        self,
        heat_channels: int,
        gray_channels: int,
        mode: int,
        options: Sequence[int] = FUSION_OPTIONS,
    ):
        super().__init__()
        if mode not in (1, 2):
            raise ValueError(f"exchanger mode must be 1 or 2, got {mode}")
        self.mode = mode
        primary, aux = (heat_channels, gray_channels) if mode == 1 else (gray_channels, heat_channels)
        self.fusion = PrimaryAuxFusion(primary, aux, options)
        self.attention = CoordinateAttention(primary)
        self.alpha = nn.Parameter(torch.zeros(()))

    def forward(self, heat: torch.Tensor, gray: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        if heat.shape[0] != gray.shape[0]:
            raise ShapeError(f"stream batch sizes differ: {heat.shape[0]} vs {gray.shape[0]}")
        primary, aux = (heat, gray) if self.mode == 1 else (gray, heat)
        fused = self.fusion(primary, aux)
        updated = primary + self.alpha * self.attention(fused)
        return (updated, gray) if self.mode == 1 else (heat, updated)


def exchanger_forward(heat_stream: torch.Tensor, gray_stream: torch.Tensor, params: Exchanger):
    return params(heat_stream, gray_stream)
