"""Strict JSON readers and writers for annotation, prediction, and report files.

Files store boxes in absolute pixel coordinates; the in-memory model is
normalized to [0, 1], so readers divide by the video's width/height and
writers multiply back. Every schema error names the JSON path where it
occurred. Writers re-parse their own output before touching disk, so a
file that was written is a file that will read back.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

from ..anno_model import (
    BlinkInterval,
    FrameBox,
    InstancePrediction,
    InstanceTrack,
    VideoAnnotation,
    VideoPrediction,
    validate_annotation,
)
from ..metrics import EvalReport


class SchemaError(ValueError):
    """A file violated the schema; carries the JSON path of the offense."""

    def __init__(self, path: str, message: str):
        self.json_path = path
        super().__init__(f"{path}: {message}")


class InternalCheckError(RuntimeError):
    """An emitted file failed its own schema self-check."""


def _require(obj: dict, key: str, path: str) -> Any:
    if not isinstance(obj, dict):
        raise SchemaError(path, f"expected object, got {type(obj).__name__}")
    if key not in obj:
        raise SchemaError(path, f"missing field {key!r}")
    return obj[key]


def _check_known(obj: dict, allowed: set[str], path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(path, f"unknown fields {sorted(unknown)}")


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected integer, got {value!r}")
    return value


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected number, got {value!r}")
    return float(value)


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, f"expected string, got {value!r}")
    return value


def _as_list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(path, f"expected array, got {type(value).__name__}")
    return value


def _parse_box(value: Any, width: int, height: int, path: str) -> FrameBox:
    items = _as_list(value, path)
    if len(items) != 4:
        raise SchemaError(path, f"box must have 4 coordinates, got {len(items)}")
    x1, y1, x2, y2 = (_as_number(v, f"{path}[{i}]") for i, v in enumerate(items))
    return FrameBox(x1 / width, y1 / height, x2 / width, y2 / height)


def _parse_blink(value: Any, path: str, with_confidence: bool) -> BlinkInterval:
    allowed = {"start", "end", "confidence"} if with_confidence else {"start", "end"}
    start = _as_int(_require(value, "start", path), f"{path}.start")
    end = _as_int(_require(value, "end", path), f"{path}.end")
    _check_known(value, allowed, path)
    if with_confidence:
        confidence = _as_number(_require(value, "confidence", path), f"{path}.confidence")
    else:
        confidence = 1.0
    return BlinkInterval(start, end, confidence)


def parse_annotations(data: Any, source: str = "$") -> list[VideoAnnotation]:
    """Structural parse of the annotation schema (invariants checked separately)."""
    _check_known(_require_root(data, source), {"videos"}, source)
    videos_raw = _as_list(_require(data, "videos", source), f"{source}.videos")
    videos = []
    for vi, video in enumerate(videos_raw):
        vpath = f"{source}.videos[{vi}]"
        _check_known(video, {"video_id", "num_frames", "fps", "width", "height", "instances"}, vpath)
        video_id = _as_str(_require(video, "video_id", vpath), f"{vpath}.video_id")
        num_frames = _as_int(_require(video, "num_frames", vpath), f"{vpath}.num_frames")
        fps = _as_number(_require(video, "fps", vpath), f"{vpath}.fps")
        width = _as_int(_require(video, "width", vpath), f"{vpath}.width")
        height = _as_int(_require(video, "height", vpath), f"{vpath}.height")
        if width <= 0 or height <= 0:
            raise SchemaError(vpath, f"width/height must be positive, got {width}x{height}")
        instances = []
        for ii, inst in enumerate(_as_list(_require(video, "instances", vpath), f"{vpath}.instances")):
            ipath = f"{vpath}.instances[{ii}]"
            _check_known(inst, {"presence", "boxes", "blinks"}, ipath)
            presence = [
                _as_int(v, f"{ipath}.presence[{t}]")
                for t, v in enumerate(_as_list(_require(inst, "presence", ipath), f"{ipath}.presence"))
            ]
            boxes: list[Optional[FrameBox]] = []
            for t, raw in enumerate(_as_list(_require(inst, "boxes", ipath), f"{ipath}.boxes")):
                boxes.append(None if raw is None else _parse_box(raw, width, height, f"{ipath}.boxes[{t}]"))
            blinks = [
                _parse_blink(b, f"{ipath}.blinks[{k}]", with_confidence=False)
                for k, b in enumerate(_as_list(_require(inst, "blinks", ipath), f"{ipath}.blinks"))
            ]
            instances.append(InstanceTrack(tuple(presence), tuple(boxes), tuple(blinks)))
        videos.append(VideoAnnotation(video_id, num_frames, fps, width, height, tuple(instances)))
    return videos


def _require_root(data: Any, source: str) -> dict:
    if not isinstance(data, dict):
        raise SchemaError(source, f"expected top-level object, got {type(data).__name__}")
    return data


def parse_predictions(data: Any, source: str = "$") -> list[VideoPrediction]:
    """Structural parse of the prediction schema."""
    _check_known(_require_root(data, source), {"videos"}, source)
    videos_raw = _as_list(_require(data, "videos", source), f"{source}.videos")
    videos = []
    for vi, video in enumerate(videos_raw):
        vpath = f"{source}.videos[{vi}]"
        _check_known(video, {"video_id", "num_frames", "width", "height", "hypotheses"}, vpath)
        video_id = _as_str(_require(video, "video_id", vpath), f"{vpath}.video_id")
        num_frames = _as_int(_require(video, "num_frames", vpath), f"{vpath}.num_frames")
        width = _as_int(_require(video, "width", vpath), f"{vpath}.width")
        height = _as_int(_require(video, "height", vpath), f"{vpath}.height")
        if width <= 0 or height <= 0:
            raise SchemaError(vpath, f"width/height must be positive, got {width}x{height}")
        hypotheses = []
        for hi, hyp in enumerate(_as_list(_require(video, "hypotheses", vpath), f"{vpath}.hypotheses")):
            hpath = f"{vpath}.hypotheses[{hi}]"
            _check_known(hyp, {"face_scores", "boxes", "blink_scores", "blink_intervals", "presence"}, hpath)
            face_scores = [
                _as_number(v, f"{hpath}.face_scores[{t}]")
                for t, v in enumerate(_as_list(_require(hyp, "face_scores", hpath), f"{hpath}.face_scores"))
            ]
            boxes = [
                _parse_box(raw, width, height, f"{hpath}.boxes[{t}]")
                for t, raw in enumerate(_as_list(_require(hyp, "boxes", hpath), f"{hpath}.boxes"))
            ]
            blink_scores = [
                _as_number(v, f"{hpath}.blink_scores[{t}]")
                for t, v in enumerate(_as_list(_require(hyp, "blink_scores", hpath), f"{hpath}.blink_scores"))
            ]
            intervals = [
                _parse_blink(b, f"{hpath}.blink_intervals[{k}]", with_confidence=True)
                for k, b in enumerate(
                    _as_list(_require(hyp, "blink_intervals", hpath), f"{hpath}.blink_intervals")
                )
            ]
            for name, seq in (("face_scores", face_scores), ("boxes", boxes), ("blink_scores", blink_scores)):
                if len(seq) != num_frames:
                    raise SchemaError(
                        f"{hpath}.{name}", f"length {len(seq)} != num_frames {num_frames}"
                    )
            for k, interval in enumerate(intervals):
                kpath = f"{hpath}.blink_intervals[{k}]"
                if interval.start > interval.end:
                    raise SchemaError(kpath, f"start <= end violated ({interval.start} > {interval.end})")
                if interval.start < 0 or interval.end > num_frames - 1:
                    raise SchemaError(kpath, "interval outside frame range")
            hypotheses.append(
                InstancePrediction(tuple(face_scores), tuple(boxes), tuple(blink_scores), tuple(intervals))
            )
        videos.append(VideoPrediction(video_id, num_frames, tuple(hypotheses)))
    return videos


def _load_json(path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"invalid JSON: {exc}") from exc


def read_annotations(path, validate: bool = True) -> list[VideoAnnotation]:
    """Read, parse, and (by default) invariant-check an annotation file."""
    videos = parse_annotations(_load_json(path), source=str(path))
    if validate:
        for vi, video in enumerate(videos):
            violations = validate_annotation(video)
            if violations:
                raise SchemaError(f"{path}:videos[{vi}]", "; ".join(violations))
    return videos


def read_predictions(path) -> list[VideoPrediction]:
    return parse_predictions(_load_json(path), source=str(path))


def annotations_to_dict(videos: list[VideoAnnotation]) -> dict:
    out = []
    for video in videos:
        instances = []
        for track in video.instances:
            instances.append(
                {
                    "presence": list(track.face_presence),
                    "boxes": [
                        None
                        if box is None
                        else [
                            box.x1 * video.width,
                            box.y1 * video.height,
                            box.x2 * video.width,
                            box.y2 * video.height,
                        ]
                        for box in track.boxes
                    ],
                    "blinks": [{"start": b.start, "end": b.end} for b in track.blinks],
                }
            )
        out.append(
            {
                "video_id": video.video_id,
                "num_frames": video.num_frames,
                "fps": video.fps,
                "width": video.width,
                "height": video.height,
                "instances": instances,
            }
        )
    return {"videos": out}


def predictions_to_dict(
    videos: list[VideoPrediction], width: int, height: int
) -> dict:
    out = []
    for video in videos:
        hypotheses = []
        for hyp in video.hypotheses:
            hypotheses.append(
                {
                    "face_scores": list(hyp.face_scores),
                    # presence is derived for readability: score >= 0.5 mirrors a visible face
                    "presence": [1 if s >= 0.5 else 0 for s in hyp.face_scores],
                    "boxes": [
                        [b.x1 * width, b.y1 * height, b.x2 * width, b.y2 * height]
                        for b in hyp.boxes
                    ],
                    "blink_scores": list(hyp.blink_scores),
                    "blink_intervals": [
                        {"start": b.start, "end": b.end, "confidence": b.confidence}
                        for b in hyp.blink_intervals
                    ],
                }
            )
        out.append(
            {
                "video_id": video.video_id,
                "num_frames": video.num_frames,
                "width": width,
                "height": height,
                "hypotheses": hypotheses,
            }
        )
    return {"videos": out}


def write_annotations(path, videos: list[VideoAnnotation]) -> None:
    data = annotations_to_dict(videos)
    try:
        parse_annotations(data)  # self-check before emitting
    except SchemaError as exc:
        raise InternalCheckError(f"annotation emission failed self-check: {exc}") from exc
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def write_predictions(path, videos: list[VideoPrediction], width: int, height: int) -> None:
    data = predictions_to_dict(videos, width, height)
    try:
        parse_predictions(data)
    except SchemaError as exc:
        raise InternalCheckError(f"prediction emission failed self-check: {exc}") from exc
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def write_report(path, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")


def read_scores(path) -> list[float]:
    """Read a frame-score file: either a bare JSON array or {"scores": [...]}."""
    data = _load_json(path)
    if isinstance(data, dict):
        data = _require(data, "scores", str(path))
    items = _as_list(data, str(path))
    return [_as_number(v, f"{path}[{i}]") for i, v in enumerate(items)]
