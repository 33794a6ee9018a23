import numpy as np
import pytest
import torch

from radnas.detector.layout import ModelConfig
from radnas.nn_core.usconv import USConv2d
from radnas.rdmap_io import RDMapDataset, SynthConfig, collate_batch, synth_generate


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    monkeypatch.delenv("RADNAS_OUT", raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Narrow 32x32 network: grids 4x4, 2x2, 1x1."""
    return ModelConfig(
        num_classes=2,
        input_size=(32, 32),
        backbone_widths=(8, 8, 16, 16, 24),
        stem_widths=(4, 8, 8),
        neck_widths=(8, 8, 16),
    )


@pytest.fixture
def tiny_synth():
    return SynthConfig(height=32, width=32, train=8, val=4, test=0, num_classes=2, max_objects=2)


@pytest.fixture
def synth_manifests(tmp_path_factory, tiny_synth):
    out = tmp_path_factory.mktemp("synth")
    return synth_generate(tiny_synth, seed=7, out_dir=out)


@pytest.fixture
def train_set(synth_manifests):
    return RDMapDataset(synth_manifests["train"], flip_prob=0.0, size=(32, 32), seed=7)


@pytest.fixture
def val_set(synth_manifests):
    return RDMapDataset(synth_manifests["val"], size=(32, 32))


@pytest.fixture
def train_batch(train_set):
    return collate_batch([train_set[i] for i in range(4)])


def random_batch(generator: torch.Generator, n: int = 2, size: int = 32, dtype=torch.float32):
    heat = torch.rand(n, 3, size, size, generator=generator, dtype=dtype)
    gray = torch.rand(n, 1, size, size, generator=generator, dtype=dtype)
    return heat, gray


def randomize_norm_stats(model: torch.nn.Module, generator: torch.Generator) -> None:
    """Non-trivial running statistics so eval-mode slicing is actually exercised."""
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, USConv2d) and module.has_norm:
                module.running_mean.copy_(torch.randn(module.running_mean.shape, generator=generator) * 0.1)
                module.running_var.copy_(torch.rand(module.running_var.shape, generator=generator) + 0.5)


def set_adapter_scalars(model: torch.nn.Module, value: float) -> None:
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith((".alpha", ".gamma", ".lam")):
                param.fill_(value)
