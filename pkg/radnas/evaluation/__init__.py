"""Detection post-processing and metrics."""

from .metrics import (
    COCO_THRESHOLDS,
    NMS_IOU_THRESHOLD,
    REPORT_THRESHOLDS,
    Box,
    GroundTruth,
    MAPReport,
    ScoredDetection,
    average_precision,
    interpolated_ap,
    iou,
    iou_matrix,
    map_report,
    nms,
    write_metric_csv,
)

__all__ = [
    "COCO_THRESHOLDS",
    "NMS_IOU_THRESHOLD",
    "REPORT_THRESHOLDS",
    "Box",
    "GroundTruth",
    "MAPReport",
    "ScoredDetection",
    "average_precision",
    "interpolated_ap",
    "iou",
    "iou_matrix",
    "map_report",
    "nms",
    "write_metric_csv",
]
