"""
Analytic cost model: the realized subnet's conv layers enumerated from the
model layout, without building any tensors.
"""

from typing import Dict, List, Mapping, NamedTuple, Optional, Tuple

from radnas.detector.layout import ArchValue, ModelConfig, channel_plan, fusion_choices
from radnas.exceptions import ShapeError
from radnas.nn_core.attention import attention_mid_channels
from radnas.nn_core.stem import STEM_STRIDES


class ConvShape(NamedTuple):
    name: str
    c_in: int
    c_out: int
    kernel: int
    bias: bool
    norm: bool
    h_out: int
    w_out: int
    pooled: bool = False  # runs on an (H+W) strip of pooled descriptors, not on the feature map

    @property
    def params(self) -> int:
        return self.c_in * self.c_out * self.kernel**2 + (self.c_out if self.bias else 0) + (2 * self.c_out if self.norm else 0)

    @property
    def flops(self) -> int:
        return 2 * self.c_in * self.c_out * self.kernel**2 * self.h_out * self.w_out


class LayerPlan(NamedTuple):
    convs: List[ConvShape]
    scalars: Dict[str, int]


def _conv(name, c_in, c_out, k, hw, bias=False, norm=True, pooled=False) -> ConvShape:
    return ConvShape(name, c_in, c_out, k, bias, norm, hw[0], hw[1], pooled)


def _scale(dims: Tuple[int, int], stride: int) -> Tuple[int, int]:
    return dims[0] // stride, dims[1] // stride


def _exchanger(name: str, primary: int, aux: int, primary_hw, aux_hw, option: int, convs: List[ConvShape], scalars: Dict[str, int]):
    convs.append(_conv(f"{name}.fusion.aux_proj", aux, primary, 1, aux_hw, bias=True, norm=False))
    mid = attention_mid_channels(primary)
    h, w = primary_hw
    convs.append(_conv(f"{name}.attention.conv1", primary, mid, 1, (h + w, 1), pooled=True))
    convs.append(_conv(f"{name}.attention.conv_h", mid, primary, 1, (h, 1), bias=True, norm=False, pooled=True))
    convs.append(_conv(f"{name}.attention.conv_w", mid, primary, 1, (w, 1), bias=True, norm=False, pooled=True))
    scalars[f"{name}.alpha"] = 1
    if option == 1:
        scalars[f"{name}.fusion.gamma"] = 1
    elif option == 3:
        scalars[f"{name}.fusion.lam"] = 1


def layer_plan(config: ModelConfig, arch: Mapping[str, ArchValue], input_dims: Optional[Tuple[int, int]] = None) -> LayerPlan:
    """Every conv of the standalone subnet for `arch`, with its output map size."""
    dims = tuple(input_dims or config.input_size)
    if dims[0] % 32 or dims[1] % 32:
        raise ShapeError(f"input {dims[0]}x{dims[1]} is not divisible by 32")
    plan = channel_plan(config, arch)
    fusion = fusion_choices(config, arch)
    convs: List[ConvShape] = []
    scalars: Dict[str, int] = {}

    widths = [plan[f"backbone_{k}"] for k in range(1, 6)]
    hidden = [plan[f"backbone_{k}_hidden"] for k in range(1, 6)]
    in_chans = [config.backbone_in_channels, *widths[:-1]]
    for k in range(5):
        hw = _scale(dims, 2 ** (k + 1))
        prefix = f"stages.{k}"
        convs.append(_conv(f"{prefix}.down", in_chans[k], widths[k], 3, hw))
        convs.append(_conv(f"{prefix}.csp.cv1", widths[k], hidden[k], 1, hw))
        convs.append(_conv(f"{prefix}.csp.cv2", widths[k], hidden[k], 1, hw))
        for d in range(config.csp_depth):
            convs.append(_conv(f"{prefix}.csp.blocks.{d}.conv1", hidden[k], hidden[k], 3, hw))
            convs.append(_conv(f"{prefix}.csp.blocks.{d}.conv2", hidden[k], hidden[k], 3, hw))
        convs.append(_conv(f"{prefix}.csp.cv3", 2 * hidden[k], widths[k], 1, hw))

    if config.has_stem:
        stem = [plan[f"stem_{j}"] for j in range(1, 4)]
        chans = [config.adapter_in_channels, *stem]
        stride = 1
        for j in range(3):
            stride *= STEM_STRIDES[j]
            convs.append(_conv(f"stem.layers.{j}", chans[j], chans[j + 1], 3, _scale(dims, stride)))
        gray, gray_hw = stem[-1], _scale(dims, stride)
        if config.adapter == "stem_only":
            convs.append(_conv("stem_merge", gray, widths[1], 1, gray_hw, bias=True, norm=False))
        for site in config.exchanger_sites():
            if site.position == "input":
                heat, heat_hw = widths[site.block - 2], _scale(dims, 2 ** (site.block - 1))
            else:
                heat, heat_hw = widths[site.block - 1], _scale(dims, 2**site.block)
            name = f"exchangers.{site.block_id}"
            if site.default_mode == 1:
                _exchanger(name, heat, gray, heat_hw, gray_hw, fusion[site.block_id], convs, scalars)
            else:
                _exchanger(name, gray, heat, gray_hw, heat_hw, fusion[site.block_id], convs, scalars)

    neck = [plan[f"neck_{j}"] for j in range(1, 4)]
    level_hw = [_scale(dims, s) for s in (8, 16, 32)]
    for j in range(3):
        convs.append(_conv(f"neck.lateral.{j}", widths[j + 2], neck[j], 1, level_hw[j]))
    for j in range(2):
        convs.append(_conv(f"neck.top_down.{j}", neck[j + 1], neck[j], 1, level_hw[j + 1]))
    for j in range(3):
        convs.append(_conv(f"neck.smooth.{j}", neck[j], neck[j], 3, level_hw[j]))
    for j in range(3):
        hw = level_hw[j]
        convs.append(_conv(f"head.{j}.cls_conv", neck[j], neck[j], 3, hw))
        convs.append(_conv(f"head.{j}.cls_pred", neck[j], config.num_classes, 1, hw, bias=True, norm=False))
        convs.append(_conv(f"head.{j}.box_conv", neck[j], neck[j], 3, hw))
        convs.append(_conv(f"head.{j}.box_pred", neck[j], 4, 1, hw, bias=True, norm=False))
    return LayerPlan(convs, scalars)


def count_params(space, gene, config: ModelConfig) -> int:
    layers = layer_plan(config, space.decode(gene))
    return sum(c.params for c in layers.convs) + sum(layers.scalars.values())


def estimate_flops(space, gene, config: ModelConfig, input_dims: Optional[Tuple[int, int]] = None) -> int:
    """Multiply-adds of the convolutions over feature maps; proportional to input area."""
    layers = layer_plan(config, space.decode(gene), input_dims)
    return sum(c.flops for c in layers.convs if not c.pooled)


def pooled_flops(space, gene, config: ModelConfig, input_dims: Optional[Tuple[int, int]] = None) -> int:
    """Multiply-adds of the coordinate-attention convs on pooled strips, left out of `estimate_flops`."""
    layers = layer_plan(config, space.decode(gene), input_dims)
    return sum(c.flops for c in layers.convs if c.pooled)


def adapter_overhead(config: ModelConfig, arch: Mapping[str, ArchValue]) -> Tuple[int, int]:
    """(adapter parameters, everything-else parameters) for `arch`."""
    layers = layer_plan(config, arch)
    adapter = sum(c.params for c in layers.convs if c.name.startswith(("stem", "exchangers")))
    adapter += sum(layers.scalars.values())
    rest = sum(c.params for c in layers.convs) + sum(layers.scalars.values()) - adapter
    return adapter, rest
