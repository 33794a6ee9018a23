"""
Supernet and fixed-architecture training, split evaluation and checkpoints.

Supernet steps sample one gene uniformly and update only the parameter slices
the sampled subnet touched; entries with an exactly zero gradient count as
untouched.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field
from torch.utils.data import Dataset

from radnas.detector.layout import ModelConfig
from radnas.detector.loss import BOX_LOSS_WEIGHT, LossBreakdown, compute_loss
from radnas.detector.model import RadarDetector, build_model
from radnas.detector.postprocess import flatten, labels_to_ground_truth, postprocess
from radnas.evaluation import MAPReport, map_report
from radnas.exceptions import TrainingDivergedError
from radnas.rdmap_io.dataset import RDMapDataset, make_loader
from radnas.utils import atomic_write_text

logger = logging.getLogger(__name__)

Batch = Tuple[torch.Tensor, torch.Tensor, List[torch.Tensor]]
TrainData = Union[Dataset, Sequence[Batch]]


class TrainHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(300, ge=1)
    batch_size: int = Field(64, ge=1)
    lr: float = Field(0.01, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    weight_decay: float = Field(5e-4, ge=0)
    box_weight: float = Field(BOX_LOSS_WEIGHT, ge=0)
    max_steps: Optional[int] = Field(None, ge=1)
    log_every: int = Field(50, ge=1)
    num_workers: int = Field(0, ge=0)
    use_adapter: bool = True


@dataclass
class TrainLog:
    losses: List[float] = field(default_factory=list)
    epoch_losses: List[Dict[str, float]] = field(default_factory=list)
    genes: List[Dict[str, int]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.losses)


def _batches(data: TrainData, hyper: TrainHyper, seed: int):
    """Returns a per-epoch batch iterable factory."""
    if isinstance(data, Dataset):
        loader = make_loader(data, hyper.batch_size, shuffle=True, seed=seed, num_workers=hyper.num_workers)

        def epoch_batches(epoch: int):
            if isinstance(data, RDMapDataset):
                data.set_epoch(epoch)
            return loader

        return epoch_batches
    return lambda epoch: data


def _device(model: torch.nn.Module) -> torch.device:
    return next(model.parameters()).device


def train_step(model: RadarDetector, batch: Batch, optimizer: torch.optim.Optimizer, step: int, hyper: TrainHyper) -> LossBreakdown:
    heat, gray, labels = batch
    device = _device(model)
    output = model.forward_pair(heat.to(device), gray.to(device), use_adapter=hyper.use_adapter)
    losses = compute_loss(output, labels, box_weight=hyper.box_weight)
    if not torch.isfinite(losses.total):
        raise TrainingDivergedError(step, float(losses.total))
    optimizer.zero_grad(set_to_none=False)
    losses.total.backward()
    return losses


@torch.no_grad()
def _masked_update(optimizer: torch.optim.Optimizer, params: List[torch.nn.Parameter]) -> None:
    """Optimizer step that leaves parameter entries without gradient unchanged."""
    saved = [(p, p.detach().clone(), p.grad != 0) for p in params if p.grad is not None]
    optimizer.step()
    for p, before, touched in saved:
        p.copy_(torch.where(touched, p, before))


def _make_optimizer(model: torch.nn.Module, hyper: TrainHyper) -> torch.optim.Optimizer:
    return torch.optim.SGD(model.parameters(), lr=hyper.lr, momentum=hyper.momentum, weight_decay=hyper.weight_decay)


def _fit(model: RadarDetector, data: TrainData, hyper: TrainHyper, seed: int, tag: str, before_step=None, masked: bool = False) -> TrainLog:
    log = TrainLog()
    optimizer = _make_optimizer(model, hyper)
    params = [p for p in model.parameters() if p.requires_grad]
    epoch_batches = _batches(data, hyper, seed)
    step = 0
    model.train()
    for epoch in range(hyper.epochs):
        sums = {"cls_loss": 0.0, "box_loss": 0.0, "total": 0.0}
        count = 0
        for batch in epoch_batches(epoch):
            if hyper.max_steps is not None and step >= hyper.max_steps:
                break
            if before_step is not None:
                before_step(step, log)
            losses = train_step(model, batch, optimizer, step, hyper)
            if masked:
                _masked_update(optimizer, params)
            else:
                optimizer.step()
            parts = losses.as_floats()
            for key in sums:
                sums[key] += parts[key]
            count += 1
            log.losses.append(parts["total"])
            step += 1
            if step % hyper.log_every == 0:
                logger.info("[%s] step %d loss %.4f (cls %.4f box %.4f)", tag, step, parts["total"], parts["cls_loss"], parts["box_loss"])
        if count:
            means = {key: value / count for key, value in sums.items()}
            log.epoch_losses.append(means)
            logger.info("[%s] epoch %d/%d mean loss %.4f", tag, epoch + 1, hyper.epochs, means["total"])
        if hyper.max_steps is not None and step >= hyper.max_steps:
            break
    model.eval()
    return log


def train_supernet(config: ModelConfig, space, data: TrainData, hyper: TrainHyper, seed: int, model: Optional[RadarDetector] = None) -> Tuple[RadarDetector, TrainLog]:
    """Single-path uniform-sampling training of the weight-sharing supernet."""
    from radnas.nas.space import sample_uniform

    if isinstance(data, Dataset) and len(data) == 0 or not isinstance(data, Dataset) and not data:
        raise ValueError("training data is empty")
    supernet = model if model is not None else build_model(config, seed=seed)
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)

    def sample(step: int, log: TrainLog):
        gene = sample_uniform(space, rng)
        supernet.activate(space.decode(gene))
        log.genes.append(dict(gene.choices))

    logger.info("[SUPERNET] training over %d candidate subnets for %d epochs", space.cardinality, hyper.epochs)
    log = _fit(supernet, data, hyper, seed, "SUPERNET", before_step=sample, masked=True)
    supernet.activate(space.decode(space.extreme_gene(largest=True)))
    return supernet, log


def train_fixed(config: ModelConfig, gene, space, data: TrainData, hyper: TrainHyper, seed: int) -> Tuple[RadarDetector, TrainLog]:
    """Train the subnet `gene` from fresh weights (`gene=None` trains the full-width model)."""
    if isinstance(data, Dataset) and len(data) == 0 or not isinstance(data, Dataset) and not data:
        raise ValueError("training data is empty")
    model = build_model(config, gene, space=space, seed=seed)
    torch.manual_seed(seed)
    log = _fit(model, data, hyper, seed, "RETRAIN")
    return model, log


@torch.no_grad()
def predict_split(model: RadarDetector, data: TrainData, batch_size: int = 32, use_adapter: bool = True):
    """(detections, ground truth) over a split, in manifest order."""
    model.eval()
    if isinstance(data, Dataset):
        data = make_loader(data, batch_size, shuffle=False, seed=0)
    device = _device(model)
    detections, truths = [], []
    image_id = 0
    for heat, gray, labels in data:
        output = model.forward_pair(heat.to(device), gray.to(device), use_adapter=use_adapter)
        detections.extend(flatten(postprocess(output, image_offset=image_id)))
        for offset, item in enumerate(labels):
            truths.extend(labels_to_ground_truth(item, image_id + offset))
        image_id += heat.shape[0]
    return detections, truths


def evaluate_model(model: RadarDetector, data: TrainData, batch_size: int = 32, use_adapter: bool = True) -> MAPReport:
    detections, truths = predict_split(model, data, batch_size, use_adapter)
    return map_report(detections, truths)


class CheckpointMeta(BaseModel):
    config_hash: str
    gene: Optional[Dict[str, int]] = None
    epoch: int = 0
    seed: int


def save_checkpoint(path: Union[str, Path], model: torch.nn.Module, meta: CheckpointMeta) -> Path:
    """Tensors go to `path`, metadata to `<path>.meta.json`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    torch.save(model.state_dict(), tmp)
    tmp.replace(path)
    atomic_write_text(meta_path(path), json.dumps(meta.model_dump(), indent=2, sort_keys=True) + "\n")
    return path


def meta_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, torch.Tensor], CheckpointMeta]:
    path = Path(path)
    state = torch.load(path, map_location="cpu", weights_only=True)
    meta = CheckpointMeta.model_validate_json(meta_path(path).read_text(encoding="utf-8"))
    return state, meta

