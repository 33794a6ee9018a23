"""Neural building blocks: elastic conv, coordinate attention, fusion, Exchanger, Stem."""

from .attention import CoordinateAttention, attention_mid_channels, coordinate_attention
from .fusion import FUSION_OPTIONS, Exchanger, PrimaryAuxFusion, exchanger_forward, primary_aux_fuse
from .stem import STEM_STRIDES, Stem, stem_forward
from .usconv import USConv2d, realize_channels, usconv_forward

__all__ = [
    "FUSION_OPTIONS",
    "STEM_STRIDES",
    "CoordinateAttention",
    "Exchanger",
    "PrimaryAuxFusion",
    "Stem",
    "USConv2d",
    "attention_mid_channels",
    "coordinate_attention",
    "exchanger_forward",
    "primary_aux_fuse",
    "realize_channels",
    "stem_forward",
    "usconv_forward",
]
