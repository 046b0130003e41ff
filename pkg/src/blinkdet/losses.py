"""Training losses with analytic gradients.

Matched prediction/ground-truth pairs are scored with a focal term on the
per-frame face scores, an L1 + GIoU term on boxes of visible frames, and a
focal term on the frame-level blink scores against labels derived from the
ground-truth blink intervals. Unmatched predictions are pushed toward
face score 0. Losses are reported as unnormalized per-instance sums.

Scores are clamped to [EPS, 1 - EPS] before any logarithm; the returned
derivatives are of the clamped function (flat outside the clamp window).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anno_model import FrameBox, InstancePrediction, InstanceTrack, blink_frame_labels

EPS = 1e-7

DEFAULT_FOCAL_ALPHA = 0.25
DEFAULT_FOCAL_GAMMA = 2.0
DEFAULT_W_L1 = 5.0
DEFAULT_W_GIOU = 2.0
DEFAULT_LAMBDA_BLINK = 5.0


@dataclass(frozen=True)
class LossBreakdown:
    """Per-instance loss terms; total = face_cls + face_box + lambda_blink * blink."""

    face_cls: float
    face_box: float
    blink: float
    total: float
    lambda_blink: float


def focal_loss(
    p: float,
    y: int,
    alpha: float = DEFAULT_FOCAL_ALPHA,
    gamma: float = DEFAULT_FOCAL_GAMMA,
) -> tuple[float, float]:
    """Binary focal loss and its derivative with respect to the score p.

    y=1: -alpha * (1-p)^gamma * log(p); y=0: -(1-alpha) * p^gamma * log(1-p).
    """
    q = min(max(p, EPS), 1.0 - EPS)
    if y:
        one_minus = 1.0 - q
        loss = -alpha * one_minus**gamma * math.log(q)
        grad = alpha * gamma * one_minus ** (gamma - 1.0) * math.log(q) - alpha * one_minus**gamma / q
    else:
        loss = -(1.0 - alpha) * q**gamma * math.log(1.0 - q)
        grad = (
            -(1.0 - alpha) * gamma * q ** (gamma - 1.0) * math.log(1.0 - q)
            + (1.0 - alpha) * q**gamma / (1.0 - q)
        )
    if p < EPS or p > 1.0 - EPS:
        grad = 0.0  # clamped region is flat
    return loss, grad


def _giou_with_grad(pred: FrameBox, gt: FrameBox) -> tuple[float, np.ndarray]:
    """GIoU value and its gradient w.r.t. pred's (x1, y1, x2, y2).

    Ties in the max/min corner selections take the subgradient on the
    prediction side; they occur on a measure-zero set.
    """
    px1, py1, px2, py2 = pred.as_tuple()
    gx1, gy1, gx2, gy2 = gt.as_tuple()

    pw, ph = px2 - px1, py2 - py1
    area_p = pw * ph
    area_g = (gx2 - gx1) * (gy2 - gy1)
    d_area_p = np.array([-ph, -pw, ph, pw])

    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    if iw > 0.0 and ih > 0.0:
        inter = iw * ih
        d_inter = np.array(
            [
                -ih if px1 >= gx1 else 0.0,
                -iw if py1 >= gy1 else 0.0,
                ih if px2 <= gx2 else 0.0,
                iw if py2 <= gy2 else 0.0,
            ]
        )
    else:
        inter = 0.0
        d_inter = np.zeros(4)

    union = area_p + area_g - inter
    d_union = d_area_p - d_inter
    if union > 0.0:
        iou = inter / union
        d_iou = (d_inter * union - inter * d_union) / union**2
    else:
        iou = 0.0
        d_iou = np.zeros(4)

    ew = max(px2, gx2) - min(px1, gx1)
    eh = max(py2, gy2) - min(py1, gy1)
    enclose = ew * eh
    d_enclose = np.array(
        [
            -eh if px1 <= gx1 else 0.0,
            -ew if py1 <= gy1 else 0.0,
            eh if px2 >= gx2 else 0.0,
            ew if py2 >= gy2 else 0.0,
        ]
    )
    if enclose > 0.0:
        # giou = iou - 1 + union / enclose
        giou = iou - (enclose - union) / enclose
        d_giou = d_iou + (d_union * enclose - union * d_enclose) / enclose**2
    else:
        giou = iou
        d_giou = d_iou
    return giou, d_giou


def giou_loss(pred: FrameBox, gt: FrameBox) -> tuple[float, np.ndarray]:
    """GIoU loss 1 - GIoU in [0, 2] and its gradient w.r.t. pred's corners."""
    if gt.area <= 0.0:
        raise ValueError(f"degenerate ground-truth box {gt.as_tuple()}")
    giou, d_giou = _giou_with_grad(pred, gt)
    return 1.0 - giou, -d_giou


def box_regression_cost(
    pred: FrameBox,
    gt: FrameBox,
    w_l1: float = DEFAULT_W_L1,
    w_giou: float = DEFAULT_W_GIOU,
) -> float:
    """Weighted L1 + GIoU box term shared by the matching cost and the loss.

    L1 is the mean absolute difference of the four normalized coordinates.
    """
    l1 = sum(abs(a - b) for a, b in zip(pred.as_tuple(), gt.as_tuple())) / 4.0
    giou, _ = _giou_with_grad(pred, gt)
    return w_l1 * l1 + w_giou * (1.0 - giou)


def instance_losses(
    pred: InstancePrediction,
    gt: InstanceTrack,
    w_l1: float = DEFAULT_W_L1,
    w_giou: float = DEFAULT_W_GIOU,
    lambda_blink: float = DEFAULT_LAMBDA_BLINK,
    alpha: float = DEFAULT_FOCAL_ALPHA,
    gamma: float = DEFAULT_FOCAL_GAMMA,
) -> LossBreakdown:
    """Losses of one matched prediction/ground-truth pair, summed over frames."""
    num_frames = len(gt.face_presence)
    if len(pred.face_scores) != num_frames:
        raise ValueError(
            f"length mismatch: prediction has {len(pred.face_scores)} frames, "
            f"ground truth has {num_frames}"
        )

    face_cls = 0.0
    face_box = 0.0
    for t in range(num_frames):
        face_cls += focal_loss(pred.face_scores[t], gt.face_presence[t], alpha, gamma)[0]
        if gt.face_presence[t]:
            face_box += box_regression_cost(pred.boxes[t], gt.boxes[t], w_l1, w_giou)

    labels = blink_frame_labels(gt, num_frames)
    blink = 0.0
    for t in range(num_frames):
        blink += focal_loss(pred.blink_scores[t], labels[t], alpha, gamma)[0]

    total = face_cls + face_box + lambda_blink * blink
    return LossBreakdown(face_cls, face_box, blink, total, lambda_blink)


def unmatched_loss(
    pred: InstancePrediction,
    alpha: float = DEFAULT_FOCAL_ALPHA,
    gamma: float = DEFAULT_FOCAL_GAMMA,
) -> float:
    """Loss of a prediction matched to nothing: push all face scores to 0."""
    return sum(focal_loss(s, 0, alpha, gamma)[0] for s in pred.face_scores)


def run_gradient_checks(samples: int = 1000, seed: int = 7, h: float = 1e-5) -> dict:
    """Central-difference self-check of the analytic gradients.

    Samples stay away from the clamp boundaries and from degenerate boxes.
    Returns the worst relative errors and any failing cases (rel err >= 1e-4).
    """
    rng = np.random.default_rng(seed)
    failures: list[str] = []

    max_focal = 0.0
    for _ in range(samples):
        p = float(rng.uniform(0.01, 0.99))
        y = int(rng.integers(0, 2))
        _, grad = focal_loss(p, y)
        num = (focal_loss(p + h, y)[0] - focal_loss(p - h, y)[0]) / (2 * h)
        rel = abs(grad - num) / max(abs(num), 1e-8)
        max_focal = max(max_focal, rel)
        if rel >= 1e-4:
            failures.append(f"focal p={p:.6f} y={y}: rel err {rel:.3e}")

    max_giou = 0.0
    for _ in range(samples):
        pb = _random_box(rng)
        gb = _random_box(rng)
        _, grad = giou_loss(pb, gb)
        coords = np.array(pb.as_tuple())
        for k in range(4):
            plus = coords.copy()
            minus = coords.copy()
            plus[k] += h
            minus[k] -= h
            num = (giou_loss(FrameBox(*plus), gb)[0] - giou_loss(FrameBox(*minus), gb)[0]) / (2 * h)
            rel = abs(grad[k] - num) / max(abs(num), 1e-6)
            max_giou = max(max_giou, rel)
            if rel >= 1e-4:
                failures.append(f"giou box={pb.as_tuple()} gt={gb.as_tuple()} coord {k}: rel err {rel:.3e}")

    return {"max_rel_focal": max_focal, "max_rel_giou": max_giou, "failures": failures}


def _random_box(rng: np.random.Generator) -> FrameBox:
    x1, y1 = rng.uniform(0.0, 0.6, 2)
    w, hgt = rng.uniform(0.1, 0.4, 2)
    return FrameBox(float(x1), float(y1), float(x1 + w), float(y1 + hgt))
