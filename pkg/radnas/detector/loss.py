"""
Simplified anchor-free detection loss.

Assignment: a ground-truth box claims the cell containing its centre on the
finest grid, whatever its size. A box whose cell is already claimed moves to
the next coarser grid; a box with no free cell on any grid is dropped from
the loss.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import torch
import torch.nn.functional as F

from radnas.detector.model import DetectionOutput
from radnas.rdmap_io.dataset import labels_to_tensor
from radnas.rdmap_io.records import Annotation

logger = logging.getLogger(__name__)

BOX_LOSS_WEIGHT = 5.0
IOU_EPS = 1e-9

AnnotationBatch = Sequence[Union[torch.Tensor, Sequence[Annotation]]]


@dataclass
class LossBreakdown:
    cls_loss: torch.Tensor
    box_loss: torch.Tensor
    total: torch.Tensor
    num_positive: int = 0

    def as_floats(self) -> dict:
        return {"cls_loss": float(self.cls_loss), "box_loss": float(self.box_loss), "total": float(self.total)}


def _as_tensor(labels) -> torch.Tensor:
    if isinstance(labels, torch.Tensor):
        return labels.reshape(-1, 5).double()
    return labels_to_tensor(list(labels)).double()


def choose_cell(cx: float, cy: float, grid_sizes: Sequence[Tuple[int, int]]) -> List[Tuple[int, int, int]]:
    """Candidate (level, gy, gx) cells holding the box centre, finest level first."""
    cells = []
    for level, (gh, gw) in enumerate(grid_sizes):
        gx = min(int(math.floor(cx * gw)), gw - 1)
        gy = min(int(math.floor(cy * gh)), gh - 1)
        cells.append((level, gy, gx))
    return cells


def assign_targets(grid_sizes: Sequence[Tuple[int, int]], annotations: AnnotationBatch, num_classes: int):
    """Per level: positive mask [N, Gh, Gw], class targets [N, C, Gh, Gw], xyxy box targets [N, 4, Gh, Gw]."""
    batch = len(annotations)
    pos = [torch.zeros(batch, gh, gw, dtype=torch.bool) for gh, gw in grid_sizes]
    cls_t = [torch.zeros(batch, num_classes, gh, gw) for gh, gw in grid_sizes]
    box_t = [torch.zeros(batch, 4, gh, gw, dtype=torch.float64) for gh, gw in grid_sizes]
    for b, labels in enumerate(annotations):
        for cls, cx, cy, w, h in _as_tensor(labels).tolist():
            for level, gy, gx in choose_cell(cx, cy, grid_sizes):
                if not pos[level][b, gy, gx]:
                    pos[level][b, gy, gx] = True
                    cls_t[level][b, int(cls), gy, gx] = 1.0
                    box_t[level][b, :, gy, gx] = torch.tensor([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dtype=torch.float64)
                    break
            else:
                logger.debug("[LOSS] no free cell for box (%.3f, %.3f, %.3f, %.3f) in image %d", cx, cy, w, h, b)
    return pos, cls_t, box_t


def anchor_points(gh: int, gw: int, device=None, dtype=torch.float32) -> Tuple[torch.Tensor, torch.Tensor]:
    ys = (torch.arange(gh, device=device, dtype=dtype) + 0.5) / gh
    xs = (torch.arange(gw, device=device, dtype=dtype) + 0.5) / gw
    return ys[:, None].expand(gh, gw), xs[None, :].expand(gh, gw)


def decode_boxes(offsets: torch.Tensor) -> torch.Tensor:
    """(l, t, r, b) cell-unit offsets [N, 4, Gh, Gw] -> normalized xyxy [N, 4, Gh, Gw]."""
    gh, gw = offsets.shape[-2:]
    py, px = anchor_points(gh, gw, offsets.device, offsets.dtype)
    l, t, r, b = offsets.unbind(dim=1)
    return torch.stack([px - l / gw, py - t / gh, px + r / gw, py + b / gh], dim=1)


def ciou(pred: torch.Tensor, target: torch.Tensor, eps: float = IOU_EPS) -> torch.Tensor:
    """Complete IoU of xyxy boxes [..., 4]."""
    px1, py1, px2, py2 = pred.unbind(-1)
    tx1, ty1, tx2, ty2 = target.unbind(-1)
    pw, ph = (px2 - px1).clamp(min=0), (py2 - py1).clamp(min=0)
    tw, th = (tx2 - tx1).clamp(min=0), (ty2 - ty1).clamp(min=0)
    inter = (torch.min(px2, tx2) - torch.max(px1, tx1)).clamp(min=0) * (torch.min(py2, ty2) - torch.max(py1, ty1)).clamp(min=0)
    union = pw * ph + tw * th - inter + eps
    iou = inter / union
    cw = torch.max(px2, tx2) - torch.min(px1, tx1)
    ch = torch.max(py2, ty2) - torch.min(py1, ty1)
    diag2 = cw**2 + ch**2 + eps
    rho2 = ((px1 + px2 - tx1 - tx2) ** 2 + (py1 + py2 - ty1 - ty2) ** 2) / 4
    v = (4 / math.pi**2) * (torch.atan(tw / (th + eps)) - torch.atan(pw / (ph + eps))) ** 2
    with torch.no_grad():
        alpha = v / (v - iou + (1 + eps))
    return iou - (rho2 / diag2 + v * alpha)


def compute_loss(output: DetectionOutput, annotations: AnnotationBatch, box_weight: float = BOX_LOSS_WEIGHT) -> LossBreakdown:
    num_classes = output.cls_logits[0].shape[1]
    pos, cls_t, box_t = assign_targets(output.grid_sizes, annotations, num_classes)
    device = output.cls_logits[0].device
    cls_sum = output.cls_logits[0].new_zeros(())
    box_terms = []
    num_pos = 0
    for level, (logits, offsets) in enumerate(zip(output.cls_logits, output.box_offsets)):
        target = cls_t[level].to(device=device, dtype=logits.dtype)
        cls_sum = cls_sum + F.binary_cross_entropy_with_logits(logits, target, reduction="sum")
        mask = pos[level].to(device)
        if mask.any():
            pred_boxes = decode_boxes(offsets).permute(0, 2, 3, 1)[mask]
            true_boxes = box_t[level].to(device=device, dtype=offsets.dtype).permute(0, 2, 3, 1)[mask]
            box_terms.append(1.0 - ciou(pred_boxes, true_boxes))
            num_pos += int(mask.sum())
    cls_loss = cls_sum / max(1, num_pos)
    box_loss = torch.cat(box_terms).mean() if box_terms else cls_sum.new_zeros(())
    return LossBreakdown(cls_loss=cls_loss, box_loss=box_loss, total=cls_loss + box_weight * box_loss, num_positive=num_pos)
