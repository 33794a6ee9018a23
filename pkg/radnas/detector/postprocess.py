from typing import List, Sequence

import torch

from radnas.detector.loss import decode_boxes
from radnas.detector.model import DetectionOutput
from radnas.evaluation import NMS_IOU_THRESHOLD, Box, GroundTruth, ScoredDetection, nms

CONF_THRESHOLD = 0.001
PRE_NMS_TOPK = 300
MAX_DETECTIONS = 100


@torch.no_grad()
def decode_detections(
    output: DetectionOutput,
    conf_threshold: float = CONF_THRESHOLD,
    max_det: int = PRE_NMS_TOPK,
    image_offset: int = 0,
) -> List[List[ScoredDetection]]:
    """Scored boxes per image before NMS, highest scores first."""
    per_image: List[List[ScoredDetection]] = []
    batch = output.cls_logits[0].shape[0]
    boxes = [decode_boxes(o.float()).clamp(0.0, 1.0) for o in output.box_offsets]
    scores = [torch.sigmoid(logits.float()) for logits in output.cls_logits]
    for b in range(batch):
        flat_scores, flat_boxes, flat_cls = [], [], []
        for level_scores, level_boxes in zip(scores, boxes):
            num_classes = level_scores.shape[1]
            s = level_scores[b].reshape(num_classes, -1)
            xyxy = level_boxes[b].reshape(4, -1).t()
            flat_scores.append(s.reshape(-1))
            flat_boxes.append(xyxy.repeat(num_classes, 1))
            flat_cls.append(torch.arange(num_classes).repeat_interleave(s.shape[1]))
        s = torch.cat(flat_scores)
        xyxy = torch.cat(flat_boxes)
        cls = torch.cat(flat_cls)
        keep = torch.nonzero(s > conf_threshold).flatten()
        # stable order keeps equal scores in cell order
        order = torch.argsort(-s[keep], stable=True)[:max_det]
        dets = []
        for i in keep[order].tolist():
            x1, y1, x2, y2 = xyxy[i].tolist()
            if x2 <= x1 or y2 <= y1:
                continue
            dets.append(ScoredDetection(Box(x1, y1, x2, y2), int(cls[i]), float(s[i]), image_offset + b))
        per_image.append(dets)
    return per_image


def postprocess(
    output: DetectionOutput,
    conf_threshold: float = CONF_THRESHOLD,
    iou_threshold: float = NMS_IOU_THRESHOLD,
    max_det: int = MAX_DETECTIONS,
    image_offset: int = 0,
) -> List[List[ScoredDetection]]:
    return [nms(dets, iou_threshold)[:max_det] for dets in decode_detections(output, conf_threshold, image_offset=image_offset)]


def labels_to_ground_truth(labels: torch.Tensor, image_id: int) -> List[GroundTruth]:
    """[n, 5] (cls, cx, cy, w, h) rows -> clipped xyxy ground truth."""
    out = []
    for cls, cx, cy, w, h in labels.reshape(-1, 5).tolist():
        x1, y1 = max(0.0, cx - w / 2), max(0.0, cy - h / 2)
        x2, y2 = min(1.0, cx + w / 2), min(1.0, cy + h / 2)
        if x2 > x1 and y2 > y1:
            out.append(GroundTruth(Box(x1, y1, x2, y2), int(cls), image_id))
    return out


def flatten(per_image: Sequence[Sequence]) -> list:
    return [item for items in per_image for item in items]
