"""Spatial and temporal overlap measures: box IoU/GIoU, interval IoU, tube IoU.

All functions are pure and symmetric in their two arguments. Degenerate
(zero-area) boxes never produce NaN: IoU falls back to 0 and GIoU keeps only
its enclosing-box penalty term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .anno_model import BlinkInterval, FrameBox


@dataclass(frozen=True)
class TubePair:
    """Two per-frame box sequences to compare across a whole video.

    None marks frames where that side has no box (person absent).
    """

    pred: tuple[Optional[FrameBox], ...]
    gt: tuple[Optional[FrameBox], ...]

    def __post_init__(self):
        object.__setattr__(self, "pred", tuple(self.pred))
        object.__setattr__(self, "gt", tuple(self.gt))
        if len(self.pred) != len(self.gt):
            raise ValueError(
                f"tube lengths differ: pred {len(self.pred)} vs gt {len(self.gt)}"
            )


def _intersection_area(a: FrameBox, b: FrameBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def box_iou(a: FrameBox, b: FrameBox) -> float:
    """Intersection over union of two boxes; 0 when the union has no area."""
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def box_giou(a: FrameBox, b: FrameBox) -> float:
    """Generalized IoU in [-1, 1]: IoU minus the empty share of the enclosing box."""
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    iou = inter / union if union > 0.0 else 0.0
    ew = max(a.x2, b.x2) - min(a.x1, b.x1)
    eh = max(a.y2, b.y2) - min(a.y1, b.y1)
    enclose = max(0.0, ew) * max(0.0, eh)
    if enclose <= 0.0:
        return iou
    return iou - (enclose - union) / enclose


def interval_tiou(a: BlinkInterval, b: BlinkInterval) -> float:
    """Temporal IoU of two inclusive frame intervals, counted in whole frames."""
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    union = a.num_frames + b.num_frames - inter
    return inter / union


def tube_3d_iou(pair: TubePair) -> float:
    """Volumetric IoU of two tubes: summed per-frame intersection over summed union.

    A frame where only one side has a box contributes that box's area to the
    union and nothing to the intersection; frames with neither box contribute
    nothing. Returns 0 when the union sum is 0.
    """
    inter_sum = 0.0
    union_sum = 0.0
    for p, g in zip(pair.pred, pair.gt):
        if p is None and g is None:
            continue
        if p is None:
            union_sum += g.area
        elif g is None:
            union_sum += p.area
        else:
            inter = _intersection_area(p, g)
            inter_sum += inter
            union_sum += p.area + g.area - inter
    if union_sum <= 0.0:
        return 0.0
    return inter_sum / union_sum
