import math

import numpy as np
import pytest
from pydantic import ValidationError

from radnas.detector import ModelConfig
from radnas.exceptions import GeneError
from radnas.nas import ChoiceBlockSpec, build_search_space, crossover, load_gene, mutate, sample_uniform, save_gene


@pytest.fixture(scope="module")
def space():
    return build_search_space(ModelConfig())


@pytest.fixture(scope="module")
def reduced():
    return build_search_space(ModelConfig(), reduced=True)


class TestSearchSpace:
    def test_default_cardinality(self, space):
        assert space.cardinality == 2**20 * 3**7 == 2_293_235_712
        assert len(space.block_ids) == 18

    def test_option_counts_per_block(self, space):
        counts = {b.block_id: len(b.options) for b in space.choice_blocks}
        assert counts["backbone_1"] == counts["backbone_2"] == 2
        assert all(counts[f"backbone_{k}"] == 4 for k in (3, 4, 5))
        assert all(counts[f"stem_{j}"] == 4 and counts[f"neck_{j}"] == 4 for j in (1, 2, 3))
        assert all(counts[f"exchanger_{i}"] == 3 for i in range(1, 8))

    def test_reduced_space(self, reduced):
        assert reduced.cardinality == 576
        assert reduced.block_ids == [f"backbone_{k}" for k in range(1, 6)] + ["stem_3", "exchanger_1", "exchanger_7"]
        assert reduced.fixed["neck_1"] == 1.0 and reduced.fixed["exchanger_4"] == 1
        assert sum(1 for _ in reduced.enumerate()) == 576

    def test_reduced_space_without_adapter(self):
        reduced = build_search_space(ModelConfig(adapter="none"), reduced=True)
        assert reduced.cardinality == 2**6
        assert "neck_3" in reduced.block_ids

    def test_variant_spaces(self):
        assert build_search_space(ModelConfig(adapter="none")).cardinality == 2**2 * 4**6
        assert build_search_space(ModelConfig(adapter="mode1_only")).cardinality == 2**2 * 4**9 * 3**4

    def test_space_hash_tracks_structure(self, space, reduced):
        assert space.space_hash != reduced.space_hash
        assert space.space_hash == build_search_space(ModelConfig()).space_hash

    def test_block_spec_validation(self):
        with pytest.raises(ValidationError):
            ChoiceBlockSpec(block_id="x", kind="width", options=(0.5,))
        with pytest.raises(ValidationError):
            ChoiceBlockSpec(block_id="x", kind="width", options=(0.5, 1.5))
        with pytest.raises(ValidationError):
            ChoiceBlockSpec(block_id="x", kind="fusion", options=(1, 4))


class TestGenes:
    def test_decode_encode(self, space, rng):
        gene = sample_uniform(space, rng)
        assert space.encode(space.decode(gene)) == gene

    def test_validate_lists_offending_blocks(self, space):
        choices = dict(space.extreme_gene(largest=True).choices)
        choices["exchanger_3"] = 3
        del choices["neck_2"]
        with pytest.raises(GeneError) as info:
            space.make_gene(choices)
        assert "neck_2" in info.value.blocks

    def test_out_of_range_index(self, space):
        gene = space.extreme_gene(largest=True)
        bad = gene.model_copy(update={"choices": {**gene.choices, "exchanger_3": 3}})
        with pytest.raises(GeneError) as info:
            space.validate_gene(bad)
        assert info.value.blocks == ["exchanger_3"]

    def test_extreme_genes(self, space):
        largest = space.decode(space.extreme_gene(largest=True))
        smallest = space.decode(space.extreme_gene(largest=False))
        assert largest["backbone_3"] == 1.0 and smallest["backbone_3"] == 0.25
        assert smallest["backbone_1"] == 0.5

    def test_gene_identity(self, space, rng):
        gene = sample_uniform(space, rng)
        same = space.make_gene(dict(reversed(list(gene.choices.items()))))
        assert same == gene and hash(same) == hash(gene)
        assert same.gene_id == gene.gene_id and len(gene.gene_id) == 16


class TestSampleUniform:
    def test_seeded(self, space):
        assert sample_uniform(space, np.random.default_rng(3)) == sample_uniform(space, np.random.default_rng(3))

    def test_option_frequencies(self, space):
        gen = np.random.default_rng(0)
        n = 10_000
        counts = {b.block_id: np.zeros(len(b.options)) for b in space.choice_blocks}
        for _ in range(n):
            gene = sample_uniform(space, gen)
            space.validate_gene(gene)
            for block, index in gene.choices.items():
                counts[block][index] += 1
        for block in space.choice_blocks:
            p = 1.0 / len(block.options)
            sigma = math.sqrt(n * p * (1 - p))
            assert np.all(np.abs(counts[block.block_id] - n * p) <= 4 * sigma), block.block_id


class TestCrossover:
    def test_identical_parents(self, space, rng):
        gene = sample_uniform(space, rng)
        assert crossover(gene, gene, rng) == gene

    def test_children_take_parent_choices(self, space, rng):
        for _ in range(100):
            a, b = sample_uniform(space, rng), sample_uniform(space, rng)
            child = crossover(a, b, rng)
            space.validate_gene(child)
            assert all(child.choices[k] in (a.choices[k], b.choices[k]) for k in space.block_ids)

    def test_seeded(self, space):
        gen = np.random.default_rng(1)
        a, b = sample_uniform(space, gen), sample_uniform(space, gen)
        assert crossover(a, b, np.random.default_rng(9)) == crossover(a, b, np.random.default_rng(9))

    def test_mismatched_spaces(self, space, reduced, rng):
        with pytest.raises(GeneError):
            crossover(sample_uniform(space, rng), sample_uniform(reduced, rng), rng)


class TestMutate:
    def test_zero_probability_is_identity(self, space, rng):
        gene = sample_uniform(space, rng)
        assert mutate(space, gene, 0.0, rng) == gene

    def test_full_probability_stays_valid(self, space, rng):
        for _ in range(50):
            space.validate_gene(mutate(space, sample_uniform(space, rng), 1.0, rng))

    def test_probability_range(self, space, rng):
        with pytest.raises(ValueError):
            mutate(space, space.extreme_gene(largest=True), 1.5, rng)

    def test_expected_number_of_changes(self, space):
        gen = np.random.default_rng(2)
        prob, n = 0.1, 10_000
        per_block = [prob * (1 - 1 / len(b.options)) for b in space.choice_blocks]
        expected = sum(per_block)
        sigma = math.sqrt(sum(p * (1 - p) for p in per_block) / n)
        gene = space.extreme_gene(largest=True)
        changes = []
        for _ in range(n):
            child = mutate(space, gene, prob, gen)
            changes.append(sum(child.choices[k] != gene.choices[k] for k in space.block_ids))
        assert abs(np.mean(changes) - expected) <= 4 * sigma


class TestGeneFiles:
    def test_round_trip(self, tmp_path, space, rng):
        gene = sample_uniform(space, rng)
        path = save_gene(tmp_path / "genes" / "g.json", gene, space, fitness=0.42)
        assert load_gene(path, space) == gene

    def test_space_mismatch(self, tmp_path, space, reduced, rng):
        path = save_gene(tmp_path / "g.json", sample_uniform(reduced, rng), reduced)
        with pytest.raises(GeneError, match="search space"):
            load_gene(path, space)
