"""In-memory data model for multi-person eyeblink ground truth and predictions.

Ground truth describes each person in an untrimmed video as a face tracklet
(per-frame presence flags and boxes) plus a list of eyeblink intervals with
inclusive frame endpoints. Predictions carry per-frame face scores, boxes,
and frame-level blink scores alongside merged blink intervals.

Boxes are corner-form (x1, y1, x2, y2). File readers convert absolute pixel
coordinates to normalized [0, 1] values, so everything in memory is
resolution independent. All types are immutable after construction and every
operation here is a pure function, so concurrent reads are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional


@dataclass(frozen=True)
class FrameBox:
    """Axis-aligned box, corner form. Expected ordering: x2 >= x1, y2 >= y1."""

    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class BlinkInterval:
    """One eyeblink event as an inclusive frame range [start, end]."""

    start: int
    end: int
    confidence: float = 1.0  # predictions only; ground truth keeps 1.0

    @property
    def num_frames(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class InstanceTrack:
    """Ground-truth tracklet of one person across the whole video.

    face_presence[t] is 1 where the face is visible, 0 where it is occluded
    or off screen; boxes[t] is None exactly where presence is 0.
    """

    face_presence: tuple[int, ...]
    boxes: tuple[Optional[FrameBox], ...]
    blinks: tuple[BlinkInterval, ...]

    def __post_init__(self):
        object.__setattr__(self, "face_presence", tuple(self.face_presence))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "blinks", tuple(self.blinks))

    @property
    def num_visible(self) -> int:
        return sum(1 for f in self.face_presence if f == 1)


@dataclass(frozen=True)
class VideoAnnotation:
    """Ground truth for one untrimmed video."""

    video_id: str
    num_frames: int
    fps: float
    width: int
    height: int
    instances: tuple[InstanceTrack, ...]

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))


@dataclass(frozen=True)
class InstancePrediction:
    """One hypothesis: per-frame face scores/boxes and blink scores/intervals.

    Unlike ground truth there is a box on every frame; absence is expressed
    through a low face score (and usually a zero-area box).
    """

    face_scores: tuple[float, ...]
    boxes: tuple[FrameBox, ...]
    blink_scores: tuple[float, ...]
    blink_intervals: tuple[BlinkInterval, ...]

    def __post_init__(self):
        object.__setattr__(self, "face_scores", tuple(float(s) for s in self.face_scores))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "blink_scores", tuple(float(s) for s in self.blink_scores))
        object.__setattr__(self, "blink_intervals", tuple(self.blink_intervals))

    @property
    def confidence(self) -> float:
        """Instance ranking score: arithmetic mean of the per-frame face scores."""
        if not self.face_scores:
            return 0.0
        return sum(self.face_scores) / len(self.face_scores)


@dataclass(frozen=True)
class VideoPrediction:
    """All hypotheses a detector produced for one video."""

    video_id: str
    num_frames: int
    hypotheses: tuple[InstancePrediction, ...]

    def __post_init__(self):
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))


def validate_annotation(ann: VideoAnnotation) -> list[str]:
    """Check every data-model invariant; return one message per violation.

    Violations are data, not failures: malformed annotations can be built
    and inspected, they just fail this check. Messages name the instance
    index, the frame or interval, and the violated rule.
    """
    violations: list[str] = []
    t_total = ann.num_frames

    if t_total < 1:
        violations.append(f"num_frames must be >= 1, got {t_total}")
    if not (ann.fps > 0):
        violations.append(f"fps must be > 0, got {ann.fps}")
    if ann.width <= 0 or ann.height <= 0:
        violations.append(f"width/height must be positive, got {ann.width}x{ann.height}")

    for i, track in enumerate(ann.instances):
        prefix = f"instances[{i}]"
        if len(track.face_presence) != t_total:
            violations.append(
                f"{prefix}: face_presence length {len(track.face_presence)} != num_frames {t_total}"
            )
        if len(track.boxes) != t_total:
            violations.append(
                f"{prefix}: boxes length {len(track.boxes)} != num_frames {t_total}"
            )

        for t, (flag, box) in enumerate(zip(track.face_presence, track.boxes)):
            if flag not in (0, 1):
                violations.append(f"{prefix}.face_presence[{t}]: flag must be 0 or 1, got {flag!r}")
                continue
            if flag == 1 and box is None:
                violations.append(f"{prefix}.boxes[{t}]: box/presence mismatch (presence=1, box absent)")
            if flag == 0 and box is not None:
                violations.append(f"{prefix}.boxes[{t}]: box/presence mismatch (presence=0, box given)")
            if box is not None:
                if not all(math.isfinite(v) for v in box.as_tuple()):
                    violations.append(f"{prefix}.boxes[{t}]: non-finite coordinate")
                elif box.x2 < box.x1 or box.y2 < box.y1:
                    violations.append(
                        f"{prefix}.boxes[{t}]: corner ordering violated (need x2>=x1 and y2>=y1)"
                    )

        prev: Optional[BlinkInterval] = None
        for k, blink in enumerate(track.blinks):
            bp = f"{prefix}.blinks[{k}]"
            if blink.start > blink.end:
                violations.append(f"{bp}: start <= end violated (start={blink.start}, end={blink.end})")
            if blink.start < 0 or blink.end > t_total - 1:
                violations.append(
                    f"{bp}: interval [{blink.start}, {blink.end}] outside frame range [0, {t_total - 1}]"
                )
            if prev is not None and blink.start <= prev.end:
                violations.append(
                    f"{bp}: overlaps or is unsorted relative to blinks[{k - 1}] "
                    f"(prev end={prev.end}, start={blink.start})"
                )
            prev = blink

    return violations


def interval_frame_labels(intervals: Iterable[BlinkInterval], num_frames: int) -> list[int]:
    """Binary per-frame labels: 1 iff the frame lies inside any interval."""
    labels = [0] * num_frames
    for interval in intervals:
        for t in range(max(0, interval.start), min(num_frames - 1, interval.end) + 1):
            labels[t] = 1
    return labels


def blink_frame_labels(track: InstanceTrack, num_frames: int) -> list[int]:
    """Per-frame blink labels of a ground-truth track (inverse of interval merging)."""
    return interval_frame_labels(track.blinks, num_frames)
