"""
Dual-branch detector: searchable CSP-style backbone fed by one representation,
Adapter branch (Stem + Exchangers) fed by the other, top-down neck over
strides 8/16/32 and a decoupled anchor-free head.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from radnas.detector.layout import (
    STRIDES,
    ArchValue,
    ModelConfig,
    channel_plan,
    full_arch,
    fusion_choices,
)
from radnas.exceptions import GeneError, ShapeError
from radnas.nn_core import FUSION_OPTIONS, Exchanger, PrimaryAuxFusion, Stem, USConv2d
from radnas.rdmap_io.records import RepresentationPair

logger = logging.getLogger(__name__)

CLS_PRIOR = 0.01


@dataclass
class DetectionOutput:
    """Per-scale predictions: class logits [N, C, Gh, Gw] and non-negative (l, t, r, b) offsets [N, 4, Gh, Gw] in cell units."""

    cls_logits: List[torch.Tensor]
    box_offsets: List[torch.Tensor]
    strides: Tuple[int, ...] = STRIDES

    @property
    def grid_sizes(self) -> List[Tuple[int, int]]:
        return [tuple(t.shape[-2:]) for t in self.cls_logits]

    def tensors(self) -> List[torch.Tensor]:
        return [*self.cls_logits, *self.box_offsets]


class Bottleneck(nn.Module):
    def __init__(self, hidden: int):
        super().__init__()
        self.conv1 = USConv2d(hidden, hidden, 3)
        self.conv2 = USConv2d(hidden, hidden, 3)

    def forward(self, x):
        return x + self.conv2(self.conv1(x))


class CSPUnit(nn.Module):
    """Cross-stage partial unit: one half through bottlenecks, the other bypassing, merged by a 1x1 conv."""

    def __init__(self, width: int, hidden: int, depth: int):
        super().__init__()
        self.cv1 = USConv2d(width, hidden, 1)
        self.cv2 = USConv2d(width, hidden, 1)
        self.blocks = nn.ModuleList(Bottleneck(hidden) for _ in range(depth))
        self.cv3 = USConv2d(2 * hidden, width, 1, in_groups=2)

    def set_active(self, width: int, hidden: int) -> None:
        self.cv1.set_active(hidden)
        self.cv2.set_active(hidden)
        for block in self.blocks:
            block.conv1.set_active(hidden)
            block.conv2.set_active(hidden)
        self.cv3.set_active(width)

    def forward(self, x):
        a = self.cv1(x)
        for block in self.blocks:
            a = block(a)
        return self.cv3(torch.cat([a, self.cv2(x)], dim=1))


class BackboneStage(nn.Module):
    def __init__(self, in_channels: int, width: int, hidden: int, depth: int):
        super().__init__()
        self.down = USConv2d(in_channels, width, 3, stride=2)
        self.csp = CSPUnit(width, hidden, depth)

    def set_active(self, width: int, hidden: int) -> None:
        self.down.set_active(width)
        self.csp.set_active(width, hidden)


class Neck(nn.Module):
    """Top-down merge: N3 from P5, N2 from P4 + up(N3), N1 from P3 + up(N2)."""

    def __init__(self, backbone_widths: Sequence[int], widths: Sequence[int]):
        super().__init__()
        self.lateral = nn.ModuleList(USConv2d(backbone_widths[j], widths[j], 1) for j in range(3))
        # top_down[j] projects level j+1 to level j's width
        self.top_down = nn.ModuleList(USConv2d(widths[j + 1], widths[j], 1) for j in range(2))
        self.smooth = nn.ModuleList(USConv2d(widths[j], widths[j], 3) for j in range(3))

    def set_active(self, widths: Sequence[int]) -> None:
        for j in range(3):
            self.lateral[j].set_active(widths[j])
            self.smooth[j].set_active(widths[j])
        for j in range(2):
            self.top_down[j].set_active(widths[j])

    def forward(self, feats: Sequence[torch.Tensor]) -> List[torch.Tensor]:
        outs: List[Optional[torch.Tensor]] = [None, None, None]
        outs[2] = self.smooth[2](self.lateral[2](feats[2]))
        for j in (1, 0):
            up = F.interpolate(self.top_down[j](outs[j + 1]), size=feats[j].shape[-2:], mode="nearest")
            outs[j] = self.smooth[j](self.lateral[j](feats[j]) + up)
        return outs


class HeadScale(nn.Module):
    def __init__(self, width: int, num_classes: int):
        super().__init__()
        self.cls_conv = USConv2d(width, width, 3)
        self.cls_pred = USConv2d(width, num_classes, 1, bias=True, norm=False, act=False)
        self.box_conv = USConv2d(width, width, 3)
        self.box_pred = USConv2d(width, 4, 1, bias=True, norm=False, act=False)
        with torch.no_grad():
            self.cls_pred.bias.fill_(-math.log((1 - CLS_PRIOR) / CLS_PRIOR))

    def set_active(self, width: int) -> None:
        self.cls_conv.set_active(width)
        self.box_conv.set_active(width)

    def forward(self, x):
        logits = self.cls_pred(self.cls_conv(x))
        offsets = F.softplus(self.box_pred(self.box_conv(x)))
        return logits, offsets


class RadarDetector(nn.Module):
    """Built from a channel plan; the full plan makes the weight-sharing supernet."""

    def __init__(
        self,
        config: ModelConfig,
        plan: Optional[Mapping[str, int]] = None,
        fusion: Optional[Mapping[str, int]] = None,
    ):
        super().__init__()
        self.config = config
        self.plan = dict(plan or channel_plan(config, full_arch(config)))
        self.is_supernet = plan is None
        widths = [self.plan[f"backbone_{k}"] for k in range(1, 6)]
        hidden = [self.plan[f"backbone_{k}_hidden"] for k in range(1, 6)]
        in_chans = [config.backbone_in_channels, *widths[:-1]]
        self.stages = nn.ModuleList(
            BackboneStage(in_chans[k], widths[k], hidden[k], config.csp_depth) for k in range(5)
        )

        self.stem: Optional[Stem] = None
        self.stem_merge: Optional[USConv2d] = None
        self.exchangers = nn.ModuleDict()
        self.sites = config.exchanger_sites()
        if config.has_stem:
            stem_widths = [self.plan[f"stem_{j}"] for j in range(1, 4)]
            self.stem = Stem(config.adapter_in_channels, stem_widths)
            gray_channels = stem_widths[-1]
            if config.adapter == "stem_only":
                self.stem_merge = USConv2d(gray_channels, widths[1], 1, bias=True, norm=False, act=False)
            for site in self.sites:
                heat_channels = widths[site.block - 2] if site.position == "input" else widths[site.block - 1]
                options = FUSION_OPTIONS if fusion is None else (fusion[site.block_id],)
                self.exchangers[site.block_id] = Exchanger(heat_channels, gray_channels, site.default_mode, options)

        neck_widths = [self.plan[f"neck_{j}"] for j in range(1, 4)]
        self.neck = Neck(widths[2:], neck_widths)
        self.head = nn.ModuleList(HeadScale(neck_widths[j], config.num_classes) for j in range(3))

    def activate(self, arch: Mapping[str, ArchValue]) -> "RadarDetector":
        """Select the subnet `arch` inside the supernet (widths by slicing, fusion option per Exchanger)."""
        if not self.is_supernet:
            raise GeneError("activate() only applies to the full-width supernet; build a subnet with build_model")
        plan = channel_plan(self.config, arch)
        for k, stage in enumerate(self.stages, start=1):
            stage.set_active(plan[f"backbone_{k}"], plan[f"backbone_{k}_hidden"])
        if self.stem is not None:
            for j, layer in enumerate(self.stem.layers, start=1):
                layer.set_active(plan[f"stem_{j}"])
        for block_id, option in fusion_choices(self.config, arch).items():
            self.exchangers[block_id].fusion.set_option(option)
        neck_widths = [plan[f"neck_{j}"] for j in range(1, 4)]
        self.neck.set_active(neck_widths)
        for j, head in enumerate(self.head):
            head.set_active(neck_widths[j])
        return self

    def _exchange(self, block: int, position: str, heat, gray, use_adapter: bool):
        if not use_adapter:
            return heat, gray
        for site in self.sites:
            if site.block == block and site.position == position:
                heat, gray = self.exchangers[site.block_id](heat, gray)
        return heat, gray

    def forward(self, backbone_input: torch.Tensor, adapter_input: Optional[torch.Tensor] = None, use_adapter: bool = True) -> DetectionOutput:
        h, w = backbone_input.shape[-2:]
        if h % 32 or w % 32:
            raise ShapeError(f"input {h}x{w} is not divisible by 32")
        use_adapter = use_adapter and self.stem is not None
        if use_adapter and adapter_input is None:
            raise ShapeError("the adapter branch needs its input representation")
        gray = self.stem(adapter_input) if use_adapter else None

        heat = backbone_input
        feats = []
        for k, stage in enumerate(self.stages, start=1):
            heat, gray = self._exchange(k, "input", heat, gray, use_adapter)
            if k == 3 and use_adapter and self.stem_merge is not None:
                heat = heat + self._merge_stem(heat, gray)
            if k >= 4:
                feats.append(heat)
            heat = stage.down(heat)
            heat, gray = self._exchange(k, "down", heat, gray, use_adapter)
            heat = stage.csp(heat)
        heat, gray = self._exchange(5, "output", heat, gray, use_adapter)
        feats.append(heat)

        levels = self.neck(feats)
        logits, offsets = zip(*(head(x) for head, x in zip(self.head, levels)))
        return DetectionOutput(list(logits), list(offsets))

    def _merge_stem(self, heat, gray):
        merged = self.stem_merge(gray, out_channels=heat.shape[1])
        if merged.shape[-2:] != heat.shape[-2:]:
            merged = F.interpolate(merged, size=heat.shape[-2:], mode="bilinear", align_corners=False)
        return merged

    def route(self, heatmap: torch.Tensor, grayscale: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        reps = {"heatmap": heatmap, "grayscale": grayscale}
        return reps[self.config.backbone_input], reps[self.config.adapter_input]

    def forward_pair(self, heatmap: torch.Tensor, grayscale: torch.Tensor, use_adapter: bool = True) -> DetectionOutput:
        backbone_input, adapter_input = self.route(heatmap, grayscale)
        return self(backbone_input, adapter_input, use_adapter=use_adapter)


def forward_dual_branch(model: RadarDetector, pair: Union[RepresentationPair, Tuple[torch.Tensor, torch.Tensor]], use_adapter: bool = True) -> DetectionOutput:
    """Run the model on one pair (numpy [C,H,W] representations) or on batched tensors."""
    if isinstance(pair, RepresentationPair):
        heatmap = torch.from_numpy(pair.heatmap)[None]
        grayscale = torch.from_numpy(pair.grayscale)[None]
    else:
        heatmap, grayscale = pair
    param = next(model.parameters())
    heatmap = heatmap.to(device=param.device, dtype=param.dtype)
    grayscale = grayscale.to(device=param.device, dtype=param.dtype)
    return model.forward_pair(heatmap, grayscale, use_adapter=use_adapter)


def build_model(config: ModelConfig, gene=None, space=None, seed: Optional[int] = None) -> RadarDetector:
    """Full-width supernet when `gene` is None, otherwise the standalone subnet it encodes."""
    if seed is not None:
        torch.manual_seed(seed)
    if gene is None:
        return RadarDetector(config)
    # lazy import: the search space depends on this module's layout
    from radnas.nas.space import build_search_space

    space = space or build_search_space(config)
    arch = space.decode(gene)
    return RadarDetector(config, plan=channel_plan(config, arch), fusion=fusion_choices(config, arch))


@torch.no_grad()
def inherit_weights(subnet: RadarDetector, supernet: RadarDetector) -> RadarDetector:
    """Copy the prefix slices of the supernet's tensors into a standalone subnet."""
    if not supernet.is_supernet:
        raise GeneError("weights can only be inherited from a supernet")
    source = dict(supernet.named_modules())
    for name, module in subnet.named_modules():
        if name not in source:
            raise GeneError(f"subnet module {name!r} has no supernet counterpart")
        src = source[name]
        if isinstance(module, USConv2d):
            module.copy_sliced_from(src)
        elif isinstance(module, PrimaryAuxFusion):
            if module.gamma is not None:
                module.gamma.copy_(src.gamma)
            if module.lam is not None:
                module.lam.copy_(src.lam)
        elif isinstance(module, Exchanger):
            module.alpha.copy_(src.alpha)
    return subnet


def extract_subnet(supernet: RadarDetector, gene, space=None) -> RadarDetector:
    subnet = build_model(supernet.config, gene, space=space)
    return inherit_weights(subnet, supernet)


def count_model_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
