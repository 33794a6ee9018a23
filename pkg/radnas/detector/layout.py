"""
Model configuration and the static layout shared by the network builder and
the analytic cost model: choice-block ids, Exchanger sites and channel plans.
"""

from typing import Dict, List, Literal, Mapping, NamedTuple, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from radnas.nn_core.usconv import realize_channels

STRIDES = (8, 16, 32)
REPRESENTATION_CHANNELS = {"heatmap": 3, "grayscale": 1}

Representation = Literal["heatmap", "grayscale"]
AdapterVariant = Literal["none", "stem_only", "mode1_only", "full"]
ArchValue = Union[float, int]


class ExchangerSite(NamedTuple):
    index: int  # 1-based, names the block "exchanger_<index>"
    block: int  # backbone block the site belongs to
    position: Literal["input", "down", "output"]
    default_mode: int

    @property
    def block_id(self) -> str:
        return f"exchanger_{self.index}"


# Two sites per backbone block 3-5 (its input and right after its stride-2
# conv) and one after block 5 feeding the neck; modes alternate from 1.
EXCHANGER_SITES: Tuple[ExchangerSite, ...] = (
    ExchangerSite(1, 3, "input", 1),
    ExchangerSite(2, 3, "down", 2),
    ExchangerSite(3, 4, "input", 1),
    ExchangerSite(4, 4, "down", 2),
    ExchangerSite(5, 5, "input", 1),
    ExchangerSite(6, 5, "down", 2),
    ExchangerSite(7, 5, "output", 1),
)


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_classes: int = Field(2, ge=1)
    input_size: Tuple[int, int] = (64, 64)
    backbone_widths: Tuple[int, int, int, int, int] = (16, 32, 64, 128, 256)
    stem_widths: Tuple[int, int, int] = (8, 16, 32)
    neck_widths: Tuple[int, int, int] = (32, 64, 128)
    csp_depth: int = Field(1, ge=1)
    adapter: AdapterVariant = "full"
    exchanger_blocks: Tuple[int, ...] = (3, 4, 5)
    exchanger_modes: Optional[Tuple[int, ...]] = None
    backbone_input: Representation = "heatmap"
    adapter_input: Representation = "grayscale"

    @model_validator(mode="after")
    def _check_layout(self):
        if any(w < 1 for w in (*self.backbone_widths, *self.stem_widths, *self.neck_widths)):
            raise ValueError("all widths must be positive")
        if not set(self.exchanger_blocks) <= {3, 4, 5}:
            raise ValueError(f"exchanger_blocks must be a subset of {{3, 4, 5}}, got {list(self.exchanger_blocks)}")
        if self.exchanger_modes is not None:
            count = len(self._sites_before_modes())
            if len(self.exchanger_modes) != count:
                raise ValueError(f"exchanger_modes has {len(self.exchanger_modes)} entries for {count} exchangers")
            if any(m not in (1, 2) for m in self.exchanger_modes):
                raise ValueError("exchanger modes must be 1 or 2")
        return self

    def _sites_before_modes(self) -> List[ExchangerSite]:
        if self.adapter in ("none", "stem_only"):
            return []
        sites = [s for s in EXCHANGER_SITES if s.block in self.exchanger_blocks]
        if self.adapter == "mode1_only":
            sites = [s for s in sites if s.default_mode == 1]
        return sites

    def exchanger_sites(self) -> List[ExchangerSite]:
        """Active sites with their realized modes."""
        sites = self._sites_before_modes()
        if self.exchanger_modes is not None:
            return [s._replace(default_mode=m) for s, m in zip(sites, self.exchanger_modes)]
        return sites

    @property
    def has_stem(self) -> bool:
        return self.adapter != "none"

    @property
    def backbone_in_channels(self) -> int:
        return REPRESENTATION_CHANNELS[self.backbone_input]

    @property
    def adapter_in_channels(self) -> int:
        return REPRESENTATION_CHANNELS[self.adapter_input]


def width_block_ids(config: ModelConfig) -> List[str]:
    ids = [f"backbone_{k}" for k in range(1, 6)]
    if config.has_stem:
        ids += [f"stem_{j}" for j in range(1, 4)]
    ids += [f"neck_{j}" for j in range(1, 4)]
    return ids


def fusion_block_ids(config: ModelConfig) -> List[str]:
    return [s.block_id for s in config.exchanger_sites()]


def full_arch(config: ModelConfig, fusion_option: int = 1) -> Dict[str, ArchValue]:
    arch: Dict[str, ArchValue] = {block: 1.0 for block in width_block_ids(config)}
    arch.update({block: fusion_option for block in fusion_block_ids(config)})
    return arch


def csp_hidden(width: int) -> int:
    return max(1, width // 2)


def channel_plan(config: ModelConfig, arch: Mapping[str, ArchValue]) -> Dict[str, int]:
    """Realized channel counts of every elastic layer group for `arch`.

    Keys: backbone_<k>, backbone_<k>_hidden, stem_<j>, neck_<j>.
    """
    plan: Dict[str, int] = {}
    for k, width in enumerate(config.backbone_widths, start=1):
        fraction = float(arch[f"backbone_{k}"])
        plan[f"backbone_{k}"] = realize_channels(fraction, width)
        plan[f"backbone_{k}_hidden"] = realize_channels(fraction, csp_hidden(width))
    if config.has_stem:
        for j, width in enumerate(config.stem_widths, start=1):
            plan[f"stem_{j}"] = realize_channels(float(arch[f"stem_{j}"]), width)
    for j, width in enumerate(config.neck_widths, start=1):
        plan[f"neck_{j}"] = realize_channels(float(arch[f"neck_{j}"]), width)
    return plan


def fusion_choices(config: ModelConfig, arch: Mapping[str, ArchValue]) -> Dict[str, int]:
    return {block: int(arch[block]) for block in fusion_block_ids(config)}
