"""Optimal one-to-one matching between prediction and ground-truth sets.

The matching cost of a pair sums, over frames, a weighted focal term on the
face score against the presence flag plus, on visible frames only, weighted
L1 and GIoU box terms. The solver is the exact Jonker-Volgenant algorithm
from scipy; rectangular matrices yield min(rows, cols) pairs and the
leftover prediction rows are reported as unmatched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .anno_model import InstancePrediction, InstanceTrack
from .losses import (
    DEFAULT_FOCAL_ALPHA,
    DEFAULT_FOCAL_GAMMA,
    DEFAULT_W_GIOU,
    DEFAULT_W_L1,
    box_regression_cost,
    focal_loss,
)

DEFAULT_W_CLS = 2.0


@dataclass(frozen=True)
class CostMatrix:
    """Finite pairwise costs, predictions on rows, ground truths on columns."""

    costs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.costs, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"cost matrix must be 2-D and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("cost matrix entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "costs", arr)


@dataclass(frozen=True)
class Assignment:
    """One-to-one assignment: min(rows, cols) pairs plus leftover prediction rows."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float
    unmatched_predictions: tuple[int, ...]


def hungarian(costs: Union[CostMatrix, np.ndarray, Sequence[Sequence[float]]]) -> Assignment:
    """Minimum-cost one-to-one assignment over a (possibly rectangular) cost matrix."""
    if not isinstance(costs, CostMatrix):
        costs = CostMatrix(np.asarray(costs))
    arr = costs.costs
    rows, cols = linear_sum_assignment(arr)
    pairs = tuple(sorted((int(r), int(c)) for r, c in zip(rows, cols)))
    total = float(arr[rows, cols].sum())
    matched_rows = {r for r, _ in pairs}
    unmatched = tuple(r for r in range(arr.shape[0]) if r not in matched_rows)
    return Assignment(pairs, total, unmatched)


def matching_cost(
    pred: InstancePrediction,
    gt: InstanceTrack,
    w_cls: float = DEFAULT_W_CLS,
    w_l1: float = DEFAULT_W_L1,
    w_giou: float = DEFAULT_W_GIOU,
    alpha: float = DEFAULT_FOCAL_ALPHA,
    gamma: float = DEFAULT_FOCAL_GAMMA,
) -> float:
    """Pairwise matching cost; box terms count only on frames with a visible face."""
    num_frames = len(gt.face_presence)
    if len(pred.face_scores) != num_frames:
        raise ValueError(
            f"length mismatch: prediction has {len(pred.face_scores)} frames, "
            f"ground truth has {num_frames}"
        )
    cost = 0.0
    for t in range(num_frames):
        cost += w_cls * focal_loss(pred.face_scores[t], gt.face_presence[t], alpha, gamma)[0]
        if gt.face_presence[t]:
            cost += box_regression_cost(pred.boxes[t], gt.boxes[t], w_l1, w_giou)
    return cost


def match_instances(
    preds: Sequence[InstancePrediction],
    gts: Sequence[InstanceTrack],
    **cost_kwargs,
) -> Assignment:
    """Build the full cost matrix and solve it."""
    matrix = np.array(
        [[matching_cost(p, g, **cost_kwargs) for g in gts] for p in preds], dtype=float
    )
    return hungarian(CostMatrix(matrix))
