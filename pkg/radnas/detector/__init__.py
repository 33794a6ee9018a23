"""Dual-branch detector: layout, network, loss, decoding and training."""

from .layout import (
    EXCHANGER_SITES,
    STRIDES,
    ExchangerSite,
    ModelConfig,
    channel_plan,
    full_arch,
    fusion_block_ids,
    fusion_choices,
    width_block_ids,
)
from .loss import BOX_LOSS_WEIGHT, LossBreakdown, assign_targets, ciou, compute_loss, decode_boxes
from .model import (
    DetectionOutput,
    RadarDetector,
    build_model,
    count_model_params,
    extract_subnet,
    forward_dual_branch,
    inherit_weights,
)
from .postprocess import decode_detections, labels_to_ground_truth, postprocess
from .trainer import (
    CheckpointMeta,
    TrainHyper,
    TrainLog,
    evaluate_model,
    load_checkpoint,
    predict_split,
    save_checkpoint,
    train_fixed,
    train_supernet,
)

__all__ = [
    "BOX_LOSS_WEIGHT",
    "EXCHANGER_SITES",
    "STRIDES",
    "CheckpointMeta",
    "DetectionOutput",
    "ExchangerSite",
    "LossBreakdown",
    "ModelConfig",
    "RadarDetector",
    "TrainHyper",
    "TrainLog",
    "assign_targets",
    "build_model",
    "channel_plan",
    "ciou",
    "compute_loss",
    "count_model_params",
    "decode_boxes",
    "decode_detections",
    "evaluate_model",
    "extract_subnet",
    "forward_dual_branch",
    "full_arch",
    "fusion_block_ids",
    "fusion_choices",
    "inherit_weights",
    "labels_to_ground_truth",
    "load_checkpoint",
    "postprocess",
    "predict_split",
    "save_checkpoint",
    "train_fixed",
    "train_supernet",
    "width_block_ids",
]
