"""Inference post-processing: blink merging, hypothesis ranking, clip linking.

A detector runs on overlapping fixed-length clips of an untrimmed video.
Per clip, frame-level blink scores are merged into intervals and hypotheses
are ranked by mean face score. Across clips, hypotheses are chained by mean
box IoU over the overlapping frames (greedy, highest IoU first, one-to-one);
scores and boxes on overlap frames are averaged, unlinked hypotheses start
or terminate instances, and blink intervals are re-merged from the stitched
full-video score sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .anno_model import BlinkInterval, FrameBox, InstancePrediction, VideoPrediction
from .geometry import box_iou
from .netcore import ModelOutput

DEFAULT_BLINK_THRESHOLD = 0.3
DEFAULT_LINK_IOU = 0.5


@dataclass(frozen=True)
class ClipPrediction:
    """Hypotheses of one clip, frame indices local to the clip."""

    video_id: str
    clip_start: int
    length: int
    hypotheses: tuple[InstancePrediction, ...]

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"clip length must be positive, got {self.length}")
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))


def merge_blinks(scores: Sequence[float], threshold: float = DEFAULT_BLINK_THRESHOLD) -> list[BlinkInterval]:
    """Merge frame-level blink scores into intervals.

    Maximal runs of consecutive frames with score strictly above the
    threshold become inclusive intervals; interval confidence is the mean
    score inside the run. Ties at exactly the threshold are excluded, so the
    boundary behavior is deterministic.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    intervals: list[BlinkInterval] = []
    run_start = None
    run_sum = 0.0
    for t, score in enumerate(scores):
        if score > threshold:
            if run_start is None:
                run_start = t
                run_sum = 0.0
            run_sum += float(score)
        elif run_start is not None:
            length = t - run_start
            intervals.append(BlinkInterval(run_start, t - 1, run_sum / length))
            run_start = None
    if run_start is not None:
        length = len(scores) - run_start
        intervals.append(BlinkInterval(run_start, len(scores) - 1, run_sum / length))
    return intervals


def finalize(
    out: ModelOutput,
    clip_start: int,
    keep_top: int,
    video_id: str = "video",
    blink_threshold: float = DEFAULT_BLINK_THRESHOLD,
) -> ClipPrediction:
    """Turn the last iteration's raw outputs into a ranked clip prediction.

    Hypotheses are sorted by mean face score (ties keep the lower query
    index) and the top keep_top survive.
    """
    if keep_top < 1:
        raise ValueError(f"keep_top must be >= 1, got {keep_top}")
    face, boxes, blink = out.final.face_scores, out.final.boxes, out.final.blink_scores
    num_frames = face.shape[1]
    order = np.argsort(-face.mean(axis=1), kind="stable")[:keep_top]
    hypotheses = []
    for i in order:
        blink_row = [float(s) for s in blink[i]]
        hypotheses.append(
            InstancePrediction(
                face_scores=tuple(float(s) for s in face[i]),
                boxes=tuple(FrameBox(*(float(c) for c in boxes[i, t])) for t in range(num_frames)),
                blink_scores=tuple(blink_row),
                blink_intervals=tuple(merge_blinks(blink_row, blink_threshold)),
            )
        )
    return ClipPrediction(video_id, clip_start, num_frames, tuple(hypotheses))


@dataclass
class _Chain:
    """One growing instance: accumulated per-frame sums and the tail hypothesis."""

    total_frames: int
    face: np.ndarray = field(init=False)
    blink: np.ndarray = field(init=False)
    boxes: np.ndarray = field(init=False)
    weight: np.ndarray = field(init=False)
    last_clip: int = -1
    tail: InstancePrediction | None = None

    def __post_init__(self):
        self.face = np.zeros(self.total_frames)
        self.blink = np.zeros(self.total_frames)
        self.boxes = np.zeros((self.total_frames, 4))
        self.weight = np.zeros(self.total_frames)

    def absorb(self, clip: ClipPrediction, hyp: InstancePrediction, clip_index: int) -> None:
        for t in range(clip.length):
            g = clip.clip_start + t
            self.face[g] += hyp.face_scores[t]
            self.blink[g] += hyp.blink_scores[t]
            self.boxes[g] += hyp.boxes[t].as_tuple()
            self.weight[g] += 1.0
        self.last_clip = clip_index
        self.tail = hyp


def _overlap_iou(
    prev_clip: ClipPrediction,
    prev_hyp: InstancePrediction,
    next_clip: ClipPrediction,
    next_hyp: InstancePrediction,
) -> float:
    """Mean box IoU over the frames shared by two adjacent clips."""
    ov_start = next_clip.clip_start
    ov_end = prev_clip.clip_start + prev_clip.length  # exclusive
    total = 0.0
    count = 0
    for g in range(ov_start, ov_end):
        a = prev_hyp.boxes[g - prev_clip.clip_start]
        b = next_hyp.boxes[g - next_clip.clip_start]
        total += box_iou(a, b)
        count += 1
    return total / count if count else 0.0


def link_clips(
    clips: Sequence[ClipPrediction],
    iou_threshold: float = DEFAULT_LINK_IOU,
    blink_threshold: float = DEFAULT_BLINK_THRESHOLD,
) -> VideoPrediction:
    """Stitch per-clip hypotheses into whole-video instance predictions.

    Clips must be sorted by clip_start, share a video_id, and each adjacent
    pair must overlap. Linking is greedy by descending overlap IoU (strictly
    above iou_threshold, one-to-one; ties prefer the lower hypothesis index,
    then the older chain). Frames covered by two clips average their scores
    and boxes; frames outside a chain get score 0 and a zero-area box.
    """
    if not clips:
        raise ValueError("need at least one clip")
    video_id = clips[0].video_id
    for clip in clips[1:]:
        if clip.video_id != video_id:
            raise ValueError(f"inconsistent video ids: {video_id!r} vs {clip.video_id!r}")
    for prev, nxt in zip(clips, clips[1:]):
        if nxt.clip_start <= prev.clip_start:
            raise ValueError("clips must be sorted by clip_start")
        if nxt.clip_start >= prev.clip_start + prev.length:
            raise ValueError(
                f"adjacent clips must overlap: [{prev.clip_start}, {prev.clip_start + prev.length}) "
                f"then [{nxt.clip_start}, ...)"
            )

    total_frames = max(c.clip_start + c.length for c in clips)
    chains: list[_Chain] = []

    for hyp in clips[0].hypotheses:
        chain = _Chain(total_frames)
        chain.absorb(clips[0], hyp, 0)
        chains.append(chain)

    for k in range(1, len(clips)):
        clip = clips[k]
        active = [ci for ci, ch in enumerate(chains) if ch.last_clip == k - 1]
        candidates = []
        for hi, hyp in enumerate(clip.hypotheses):
            for ci in active:
                iou = _overlap_iou(clips[k - 1], chains[ci].tail, clip, hyp)
                candidates.append((iou, hi, ci))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

        used_hyps: set[int] = set()
        used_chains: set[int] = set()
        for iou, hi, ci in candidates:
            if iou <= iou_threshold:
                break
            if hi in used_hyps or ci in used_chains:
                continue
            chains[ci].absorb(clip, clip.hypotheses[hi], k)
            used_hyps.add(hi)
            used_chains.add(ci)

        for hi, hyp in enumerate(clip.hypotheses):
            if hi not in used_hyps:
                chain = _Chain(total_frames)
                chain.absorb(clip, hyp, k)
                chains.append(chain)

    hypotheses = []
    for chain in chains:
        covered = chain.weight > 0
        face = np.where(covered, chain.face / np.maximum(chain.weight, 1.0), 0.0)
        blink = np.where(covered, chain.blink / np.maximum(chain.weight, 1.0), 0.0)
        boxes = chain.boxes / np.maximum(chain.weight, 1.0)[:, None]
        blink_row = [float(s) for s in blink]
        hypotheses.append(
            InstancePrediction(
                face_scores=tuple(float(s) for s in face),
                boxes=tuple(FrameBox(*(float(c) for c in boxes[t])) for t in range(total_frames)),
                blink_scores=tuple(blink_row),
                blink_intervals=tuple(merge_blinks(blink_row, blink_threshold)),
            )
        )
    return VideoPrediction(video_id, total_frames, tuple(hypotheses))
