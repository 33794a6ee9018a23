"""
Subnet fitness by weight inheritance: slice the supernet, refresh the
normalization statistics for that width, then measure mAP@50 on validation.
"""

import logging
from typing import Iterable, Optional

import torch
from torch.utils.data import Dataset

from radnas.detector.model import RadarDetector, extract_subnet
from radnas.detector.trainer import TrainData, evaluate_model
from radnas.exceptions import SearchError
from radnas.nas.space import ArchitectureGene, SearchSpace
from radnas.nn_core.usconv import USConv2d
from radnas.rdmap_io.dataset import make_loader

logger = logging.getLogger(__name__)

RECALIBRATION_BATCHES = 20


@torch.no_grad()
def recalibrate_bn(model: RadarDetector, batches: Iterable, num_batches: int = RECALIBRATION_BATCHES, use_adapter: bool = True, batch_size: int = 32) -> int:
    """Replace running statistics with a cumulative average over `num_batches` batches; returns the count used."""
    norms = [m for m in model.modules() if isinstance(m, USConv2d) and m.has_norm]
    saved = [m.momentum for m in norms]
    used = 0
    if isinstance(batches, Dataset):
        batches = make_loader(batches, batch_size, shuffle=False, seed=0)
    was_training = model.training
    try:
        for m in norms:
            m.reset_running_stats()
            m.momentum = None
        model.train()
        param = next(model.parameters())
        for heat, gray, _ in batches:
            if used >= num_batches:
                break
            model.forward_pair(heat.to(param.device), gray.to(param.device), use_adapter=use_adapter)
            used += 1
    finally:
        for m, momentum in zip(norms, saved):
            m.momentum = momentum
        model.train(was_training)
    return used


def _is_empty(data) -> bool:
    try:
        return len(data) == 0
    except TypeError:
        return False


def evaluate_fitness(
    gene: ArchitectureGene,
    supernet: RadarDetector,
    val_set: TrainData,
    recalib_set: Optional[Iterable],
    space: SearchSpace,
    num_recalib_batches: int = RECALIBRATION_BATCHES,
    batch_size: int = 32,
) -> float:
    """mAP@50 of the inherited subnet; the supernet itself is left untouched."""
    if _is_empty(val_set):
        raise SearchError("validation set is empty")
    subnet = extract_subnet(supernet, gene, space=space)
    if recalib_set is None or _is_empty(recalib_set):
        logger.warning("[FITNESS] empty recalibration set, keeping inherited statistics for %s", gene.gene_id)
    else:
        recalibrate_bn(subnet, recalib_set, num_recalib_batches, batch_size=batch_size)
    subnet.eval()
    report = evaluate_model(subnet, val_set, batch_size=batch_size)
    fitness = float(min(1.0, max(0.0, report.map50)))
    logger.debug("[FITNESS] %s mAP@50 %.4f", gene.gene_id, fitness)
    return fitness
