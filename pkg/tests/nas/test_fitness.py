import logging

import numpy as np
import pytest
import torch

from radnas.detector import build_model, extract_subnet
from radnas.exceptions import SearchError
from radnas.nas import build_search_space, evaluate_fitness, recalibrate_bn, sample_uniform
from radnas.nn_core import USConv2d
from radnas.rdmap_io import make_loader
from tests.conftest import random_batch, set_adapter_scalars


@pytest.fixture
def supernet(tiny_config):
    model = build_model(tiny_config, seed=0)
    set_adapter_scalars(model, 0.3)
    return model.eval()


class TestRecalibration:
    def test_statistics_replaced_and_momentum_restored(self, tiny_config, supernet, train_set):
        space = build_search_space(tiny_config)
        subnet = extract_subnet(supernet, space.extreme_gene(largest=False), space=space)
        used = recalibrate_bn(subnet, train_set, num_batches=2, batch_size=2)
        assert used == 2
        norms = [m for m in subnet.modules() if isinstance(m, USConv2d) and m.has_norm]
        assert all(m.momentum == 0.03 for m in norms)
        assert all(int(m.num_batches_tracked) == 2 for m in norms)
        assert not subnet.training

    def test_identical_batches_give_identical_statistics(self, tiny_config, supernet):
        space = build_search_space(tiny_config)
        gene = sample_uniform(space, np.random.default_rng(0))
        batches = [(*random_batch(torch.Generator().manual_seed(i)), None) for i in range(3)]
        a = extract_subnet(supernet, gene, space=space)
        b = extract_subnet(supernet, gene, space=space)
        recalibrate_bn(a, batches)
        recalibrate_bn(b, batches)
        for key, value in a.state_dict().items():
            assert torch.equal(value, b.state_dict()[key])

    def test_recalibrated_supernet_slice_matches_subnet(self, tiny_config, supernet):
        space = build_search_space(tiny_config)
        gene = sample_uniform(space, np.random.default_rng(3))
        batches = [(*random_batch(torch.Generator().manual_seed(i)), None) for i in range(3)]
        subnet = extract_subnet(supernet, gene, space=space)
        supernet.activate(space.decode(gene))
        recalibrate_bn(subnet, batches)
        recalibrate_bn(supernet, batches)
        heat, gray = random_batch(torch.Generator().manual_seed(9))
        with torch.no_grad():
            for a, b in zip(supernet.forward_pair(heat, gray).tensors(), subnet.forward_pair(heat, gray).tensors()):
                assert float((a - b).abs().max()) <= 1e-5


class TestEvaluateFitness:
    def test_deterministic_and_bounded(self, tiny_config, supernet, train_set, val_set):
        space = build_search_space(tiny_config, reduced=True)
        gene = sample_uniform(space, np.random.default_rng(1))
        recalib = make_loader(train_set, 4, shuffle=False, seed=0)
        a = evaluate_fitness(gene, supernet, val_set, recalib, space, num_recalib_batches=2, batch_size=2)
        b = evaluate_fitness(gene, supernet, val_set, recalib, space, num_recalib_batches=2, batch_size=2)
        assert a == b
        assert 0.0 <= a <= 1.0

    def test_supernet_left_untouched(self, tiny_config, supernet, train_set, val_set):
        space = build_search_space(tiny_config)
        before = {k: v.clone() for k, v in supernet.state_dict().items()}
        evaluate_fitness(space.extreme_gene(largest=False), supernet, val_set, train_set, space, num_recalib_batches=1, batch_size=4)
        for key, value in supernet.state_dict().items():
            assert torch.equal(value, before[key])

    def test_empty_recalibration_set_warns(self, tiny_config, supernet, val_set, caplog):
        space = build_search_space(tiny_config)
        with caplog.at_level(logging.WARNING):
            fitness = evaluate_fitness(space.extreme_gene(largest=True), supernet, val_set, [], space, batch_size=4)
        assert 0.0 <= fitness <= 1.0
        assert "[FITNESS]" in caplog.text

    def test_empty_validation_set(self, tiny_config, supernet, train_set):
        space = build_search_space(tiny_config)
        with pytest.raises(SearchError):
            evaluate_fitness(space.extreme_gene(largest=True), supernet, [], train_set, space)
