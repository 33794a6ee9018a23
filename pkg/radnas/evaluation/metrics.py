"""
Box overlap, class-wise NMS and all-point interpolated AP / mAP.

Matching follows the VOC convention: each prediction (in score order, ties
by input order) is compared with the same-image ground truth of highest IoU;
it is a true positive iff that IoU reaches the threshold and the ground truth
is still unmatched.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

NMS_IOU_THRESHOLD = 0.1
COCO_THRESHOLDS: Tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
REPORT_THRESHOLDS: Tuple[float, ...] = tuple(sorted({0.3, *COCO_THRESHOLDS}))


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {self.as_tuple()}")
        if min(self.x1, self.y1) < 0.0 or max(self.x2, self.y2) > 1.0:
            raise ValueError(f"box {self.as_tuple()} leaves the unit square")

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


BoxLike = Union[Box, Sequence[float]]


@dataclass(frozen=True)
class ScoredDetection:
    box: Box
    class_id: int
    score: float
    image_id: int = 0

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


class GroundTruth(NamedTuple):
    box: Box
    class_id: int
    image_id: int = 0


def _coords(box: BoxLike) -> Tuple[float, float, float, float]:
    if isinstance(box, Box):
        return box.as_tuple()
    x1, y1, x2, y2 = box
    return float(x1), float(y1), float(x2), float(y2)


def iou(a: BoxLike, b: BoxLike) -> float:
    ax1, ay1, ax2, ay2 = _coords(a)
    bx1, by1, bx2, by2 = _coords(b)
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    if inter <= 0.0:
        return 0.0
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return float(min(1.0, inter / union))


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of xyxy arrays [N, 4] x [M, 4] -> [N, M]."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = np.maximum(area_a[:, None] + area_b[None, :] - inter, np.finfo(np.float64).eps)
    return np.where(inter > 0, np.minimum(inter / union, 1.0), 0.0)


def _score_order(dets: Sequence[ScoredDetection]) -> List[int]:
    # stable: equal scores keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def nms(dets: Sequence[ScoredDetection], iou_threshold: float = NMS_IOU_THRESHOLD) -> List[ScoredDetection]:
    """Greedy class-wise suppression; survivors come back in score order."""
    kept: List[ScoredDetection] = []
    kept_by_class: Dict[Tuple[int, int], List[ScoredDetection]] = {}
    for i in _score_order(dets):
        det = dets[i]
        group = kept_by_class.setdefault((det.image_id, det.class_id), [])
        if all(iou(det.box, other.box) <= iou_threshold for other in group):
            group.append(det)
            kept.append(det)
    return kept


def _match(preds: Sequence[ScoredDetection], gts: Sequence[GroundTruth], iou_threshold: float) -> List[bool]:
    """True-positive flag per prediction, in score order."""
    by_image: Dict[int, List[GroundTruth]] = {}
    for gt in gts:
        by_image.setdefault(gt.image_id, []).append(gt)
    matched = {image_id: [False] * len(items) for image_id, items in by_image.items()}
    flags = []
    for i in _score_order(preds):
        det = preds[i]
        candidates = by_image.get(det.image_id, [])
        best, best_iou = -1, 0.0
        for j, gt in enumerate(candidates):
            overlap = iou(det.box, gt.box)
            if overlap > best_iou:
                best, best_iou = j, overlap
        hit = best >= 0 and best_iou >= iou_threshold and not matched[det.image_id][best]
        if hit:
            matched[det.image_id][best] = True
        flags.append(hit)
    return flags


def interpolated_ap(recall: Sequence[float], precision: Sequence[float]) -> float:
    """Area under the all-point interpolated precision-recall curve."""
    mrec = np.concatenate(([0.0], np.asarray(recall, dtype=np.float64), [1.0]))
    mpre = np.concatenate(([0.0], np.asarray(precision, dtype=np.float64), [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def average_precision(preds: Sequence[ScoredDetection], gts: Sequence[GroundTruth], iou_threshold: float = 0.5) -> Optional[float]:
    """AP of one class slice; None when the slice has neither predictions nor ground truth."""
    if not gts:
        return 0.0 if preds else None
    if not preds:
        return 0.0
    flags = np.asarray(_match(preds, gts, iou_threshold), dtype=np.float64)
    tp = np.cumsum(flags)
    fp = np.cumsum(1.0 - flags)
    recall = tp / len(gts)
    precision = tp / (tp + fp)
    return interpolated_ap(recall, precision)


@dataclass
class MAPReport:
    per_class: Dict[int, Dict[float, float]] = field(default_factory=dict)
    map_at: Dict[float, float] = field(default_factory=dict)

    @property
    def map30(self) -> float:
        return self.map_at[0.3]

    @property
    def map50(self) -> float:
        return self.map_at[0.5]

    @property
    def map70(self) -> float:
        return self.map_at[0.7]

    @property
    def map50_95(self) -> float:
        return float(np.mean([self.map_at[t] for t in COCO_THRESHOLDS]))

    def summary(self) -> Dict[str, float]:
        return {"mAP@30": self.map30, "mAP@50": self.map50, "mAP@70": self.map70, "mAP@50-95": self.map50_95}


def map_report(
    preds: Sequence[ScoredDetection],
    gts: Sequence[GroundTruth],
    thresholds: Iterable[float] = REPORT_THRESHOLDS,
) -> MAPReport:
    thresholds = tuple(thresholds)
    classes = sorted({d.class_id for d in preds} | {g.class_id for g in gts})
    report = MAPReport()
    for threshold in thresholds:
        values = []
        for class_id in classes:
            ap = average_precision(
                [d for d in preds if d.class_id == class_id],
                [g for g in gts if g.class_id == class_id],
                threshold,
            )
            if ap is None:
                continue
            report.per_class.setdefault(class_id, {})[threshold] = ap
            values.append(ap)
        report.map_at[threshold] = float(np.mean(values)) if values else 0.0
    return report


def write_metric_csv(path: Union[str, Path], reports: Mapping[str, MAPReport]) -> Path:
    """Rows {split, class, threshold, AP}; summary rows use class "all" and the mAP name as threshold."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "class", "threshold", "AP"])
        for split, report in reports.items():
            for class_id in sorted(report.per_class):
                for threshold, ap in sorted(report.per_class[class_id].items()):
                    writer.writerow([split, class_id, f"{threshold:.2f}", f"{ap:.6f}"])
            for name, value in report.summary().items():
                writer.writerow([split, "all", name, f"{value:.6f}"])
    logger.info("[EVAL] metric report written to %s", path)
    return path
