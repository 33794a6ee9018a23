import numpy as np
import pytest

from radnas.detector import ModelConfig, build_model, count_model_params, full_arch
from radnas.exceptions import ShapeError
from radnas.nas import ConvShape, adapter_overhead, build_search_space, count_params, estimate_flops, layer_plan, pooled_flops, sample_uniform


class TestConvShape:
    def test_one_by_one_conv_with_bias(self):
        conv = ConvShape("c", 4, 8, 1, bias=True, norm=False, h_out=16, w_out=16)
        assert conv.params == 40
        assert conv.flops == 16_384

    def test_norm_adds_two_per_channel(self):
        assert ConvShape("c", 4, 8, 3, bias=False, norm=True, h_out=1, w_out=1).params == 4 * 8 * 9 + 16


class TestCountParams:
    @pytest.mark.parametrize("adapter", ["none", "stem_only", "mode1_only", "full"])
    def test_matches_built_models(self, tiny_config, adapter):
        config = tiny_config.model_copy(update={"adapter": adapter})
        space = build_search_space(config)
        gen = np.random.default_rng(21)
        for _ in range(20 if adapter == "full" else 5):
            gene = sample_uniform(space, gen)
            assert count_params(space, gene, config) == count_model_params(build_model(config, gene, space=space))

    def test_matches_default_model(self):
        config = ModelConfig()
        space = build_search_space(config, reduced=True)
        gene = sample_uniform(space, np.random.default_rng(0))
        assert count_params(space, gene, config) == count_model_params(build_model(config, gene, space=space))

    def test_monotone_in_each_width(self):
        config = ModelConfig()
        space = build_search_space(config)
        gen = np.random.default_rng(5)
        for _ in range(10):
            gene = sample_uniform(space, gen)
            base = count_params(space, gene, config)
            base_flops = estimate_flops(space, gene, config)
            for block in space.choice_blocks:
                index = gene.choices[block.block_id]
                if block.kind != "width" or index == len(block.options) - 1:
                    continue
                wider = space.make_gene({**gene.choices, block.block_id: index + 1})
                assert count_params(space, wider, config) >= base
                assert estimate_flops(space, wider, config) >= base_flops

    def test_adapter_overhead_is_small(self):
        config = ModelConfig()
        adapter, rest = adapter_overhead(config, full_arch(config))
        assert 0 < adapter <= 0.10 * rest


class TestFlops:
    @pytest.mark.parametrize("adapter", ["none", "stem_only", "mode1_only", "full"])
    def test_flops_scale_with_area(self, adapter):
        config = ModelConfig(adapter=adapter)
        space = build_search_space(config)
        for gene in (space.extreme_gene(largest=True), space.extreme_gene(largest=False)):
            assert estimate_flops(space, gene, config, (128, 128)) == 4 * estimate_flops(space, gene, config, (64, 64))

    def test_attention_strips_reported_separately(self):
        config = ModelConfig()
        space = build_search_space(config)
        gene = space.extreme_gene(largest=True)
        small, large = pooled_flops(space, gene, config, (64, 64)), pooled_flops(space, gene, config, (128, 128))
        assert small > 0 and large == 2 * small

    def test_no_adapter_has_no_attention_strips(self):
        config = ModelConfig(adapter="none")
        space = build_search_space(config)
        assert pooled_flops(space, space.extreme_gene(largest=True), config) == 0

    def test_indivisible_dims(self):
        config = ModelConfig()
        space = build_search_space(config)
        with pytest.raises(ShapeError):
            estimate_flops(space, space.extreme_gene(largest=True), config, (64, 48))

    def test_layer_names_follow_the_module_tree(self, tiny_config):
        model = build_model(tiny_config)
        module_names = {name for name, _ in model.named_modules()}
        for conv in layer_plan(tiny_config, full_arch(tiny_config)).convs:
            assert conv.name in module_names, conv.name
