"""
Search space, architecture genes and the genetic operators over them.

A gene stores one option index per searchable choice block. Blocks the space
does not search (reduced spaces) take their value from `SearchSpace.fixed`.
"""

import itertools
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from radnas.detector.layout import ArchValue, ModelConfig, fusion_block_ids, width_block_ids
from radnas.exceptions import GeneError
from radnas.nn_core.fusion import FUSION_OPTIONS
from radnas.utils import atomic_write_text, canonical_json, sha256_text

logger = logging.getLogger(__name__)

WIDTH_OPTIONS_EARLY = (0.5, 1.0)
WIDTH_OPTIONS = (0.25, 0.5, 0.75, 1.0)
REDUCED_WIDTH_OPTIONS = (0.5, 1.0)
EARLY_BACKBONE_BLOCKS = ("backbone_1", "backbone_2")


class ChoiceBlockSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    block_id: str
    kind: Literal["width", "fusion"]
    options: Tuple[Union[float, int], ...]

    @model_validator(mode="after")
    def _check_options(self):
        if len(self.options) < 2:
            raise ValueError(f"{self.block_id}: a choice block needs at least two options")
        if len(set(self.options)) != len(self.options):
            raise ValueError(f"{self.block_id}: options must be distinct")
        if self.kind == "width" and not all(0.0 < float(o) <= 1.0 for o in self.options):
            raise ValueError(f"{self.block_id}: width fractions must lie in (0, 1]")
        if self.kind == "fusion" and not set(self.options) <= set(FUSION_OPTIONS):
            raise ValueError(f"{self.block_id}: fusion options must be a subset of {FUSION_OPTIONS}")
        return self


class ArchitectureGene(BaseModel):
    model_config = ConfigDict(frozen=True)

    choices: Dict[str, int]
    space_hash: str = ""

    @property
    def gene_id(self) -> str:
        return sha256_text(canonical_json(self.choices))[:16]

    def key(self) -> Tuple[Tuple[str, int], ...]:
        return tuple(sorted(self.choices.items()))

    def __hash__(self) -> int:
        return hash(self.key())

    def __eq__(self, other) -> bool:
        return isinstance(other, ArchitectureGene) and self.key() == other.key()


class SearchSpace(BaseModel):
    model_config = ConfigDict(frozen=True)

    choice_blocks: Tuple[ChoiceBlockSpec, ...]
    fixed: Dict[str, ArchValue] = Field(default_factory=dict)

    @field_validator("choice_blocks")
    @classmethod
    def _unique_blocks(cls, blocks):
        seen = set()
        for block in blocks:
            if block.block_id in seen:
                raise ValueError(f"duplicate choice block {block.block_id}")
            seen.add(block.block_id)
        return blocks

    @property
    def block_ids(self) -> List[str]:
        return [b.block_id for b in self.choice_blocks]

    def block(self, block_id: str) -> ChoiceBlockSpec:
        for block in self.choice_blocks:
            if block.block_id == block_id:
                return block
        raise GeneError("unknown choice block", [block_id])

    @property
    def cardinality(self) -> int:
        return math.prod(len(b.options) for b in self.choice_blocks)

    @property
    def space_hash(self) -> str:
        payload = {
            "blocks": [[b.block_id, b.kind, list(b.options)] for b in self.choice_blocks],
            "fixed": self.fixed,
        }
        return sha256_text(canonical_json(payload))[:16]

    def validate_gene(self, gene: ArchitectureGene) -> None:
        expected = set(self.block_ids)
        given = set(gene.choices)
        offending = sorted(given ^ expected)
        for block in self.choice_blocks:
            index = gene.choices.get(block.block_id)
            if index is not None and not 0 <= index < len(block.options):
                offending.append(block.block_id)
        if offending:
            raise GeneError("gene does not fit the search space", offending)

    def decode(self, gene: ArchitectureGene) -> Dict[str, ArchValue]:
        """Option values for every block (searched and fixed)."""
        self.validate_gene(gene)
        arch: Dict[str, ArchValue] = dict(self.fixed)
        for block in self.choice_blocks:
            arch[block.block_id] = block.options[gene.choices[block.block_id]]
        return arch

    def make_gene(self, choices: Mapping[str, int]) -> ArchitectureGene:
        gene = ArchitectureGene(choices={b: int(choices[b]) for b in self.block_ids if b in choices}, space_hash=self.space_hash)
        if set(choices) != set(gene.choices):
            raise GeneError("gene does not fit the search space", sorted(set(choices) ^ set(self.block_ids)))
        self.validate_gene(gene)
        return gene

    def encode(self, arch: Mapping[str, ArchValue]) -> ArchitectureGene:
        choices = {}
        for block in self.choice_blocks:
            value = arch.get(block.block_id)
            if value not in block.options:
                raise GeneError(f"value {value!r} is not an option", [block.block_id])
            choices[block.block_id] = block.options.index(value)
        return self.make_gene(choices)

    def extreme_gene(self, largest: bool) -> ArchitectureGene:
        """All-maximum (or all-minimum) widths; fusion blocks take their first option."""
        choices = {}
        for block in self.choice_blocks:
            if block.kind == "width":
                pick = max if largest else min
                choices[block.block_id] = block.options.index(pick(block.options))
            else:
                choices[block.block_id] = 0
        return self.make_gene(choices)

    def enumerate(self) -> Iterator[ArchitectureGene]:
        ranges = [range(len(b.options)) for b in self.choice_blocks]
        for combo in itertools.product(*ranges):
            yield ArchitectureGene(choices=dict(zip(self.block_ids, combo)), space_hash=self.space_hash)


def _width_options(block_id: str) -> Tuple[float, ...]:
    return WIDTH_OPTIONS_EARLY if block_id in EARLY_BACKBONE_BLOCKS else WIDTH_OPTIONS


def build_search_space(config: ModelConfig, reduced: bool = False) -> SearchSpace:
    """Choice blocks for `config`'s variant.

    The reduced space searches six width blocks with two options each and the
    first and last fusion blocks; the rest is fixed at full width and option 1.
    """
    widths = width_block_ids(config)
    fusions = fusion_block_ids(config)
    if not reduced:
        blocks = [ChoiceBlockSpec(block_id=b, kind="width", options=_width_options(b)) for b in widths]
        blocks += [ChoiceBlockSpec(block_id=b, kind="fusion", options=FUSION_OPTIONS) for b in fusions]
        return SearchSpace(choice_blocks=tuple(blocks))

    searched_widths = [f"backbone_{k}" for k in range(1, 6)] + ["stem_3" if config.has_stem else "neck_3"]
    searched_fusions = list(dict.fromkeys([fusions[0], fusions[-1]])) if fusions else []
    blocks = [ChoiceBlockSpec(block_id=b, kind="width", options=REDUCED_WIDTH_OPTIONS) for b in searched_widths]
    blocks += [ChoiceBlockSpec(block_id=b, kind="fusion", options=FUSION_OPTIONS) for b in searched_fusions]
    fixed: Dict[str, ArchValue] = {b: 1.0 for b in widths if b not in searched_widths}
    fixed.update({b: 1 for b in fusions if b not in searched_fusions})
    return SearchSpace(choice_blocks=tuple(blocks), fixed=fixed)


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> ArchitectureGene:
    choices = {b.block_id: int(rng.integers(len(b.options))) for b in space.choice_blocks}
    return ArchitectureGene(choices=choices, space_hash=space.space_hash)


def crossover(a: ArchitectureGene, b: ArchitectureGene, rng: np.random.Generator) -> ArchitectureGene:
    """Each block inherits from either parent with probability 1/2."""
    if set(a.choices) != set(b.choices) or (a.space_hash and b.space_hash and a.space_hash != b.space_hash):
        raise GeneError("parents come from different search spaces", sorted(set(a.choices) ^ set(b.choices)))
    child = {block: (a.choices[block] if rng.random() < 0.5 else b.choices[block]) for block in a.choices}
    return ArchitectureGene(choices=child, space_hash=a.space_hash or b.space_hash)


def mutate(space: SearchSpace, gene: ArchitectureGene, prob: float, rng: np.random.Generator) -> ArchitectureGene:
    """Independently per block, resample the option uniformly with probability `prob`."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"mutation probability must lie in [0, 1], got {prob}")
    space.validate_gene(gene)
    choices = dict(gene.choices)
    for block in space.choice_blocks:
        if rng.random() < prob:
            choices[block.block_id] = int(rng.integers(len(block.options)))
    return ArchitectureGene(choices=choices, space_hash=space.space_hash)


class GeneFile(BaseModel):
    space_hash: str
    choices: Dict[str, int]
    values: Dict[str, ArchValue] = Field(default_factory=dict)
    fitness: Optional[float] = None


def save_gene(path: Union[str, Path], gene: ArchitectureGene, space: SearchSpace, fitness: Optional[float] = None) -> Path:
    record = GeneFile(space_hash=space.space_hash, choices=gene.choices, values=space.decode(gene), fitness=fitness)
    return atomic_write_text(path, json.dumps(record.model_dump(), indent=2, sort_keys=True) + "\n")


def load_gene(path: Union[str, Path], space: SearchSpace) -> ArchitectureGene:
    record = GeneFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    if record.space_hash != space.space_hash:
        raise GeneError(f"gene file {path} was written for search space {record.space_hash}, current space is {space.space_hash}")
    return space.make_gene(record.choices)
