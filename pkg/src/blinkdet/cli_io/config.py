"""Run configuration: detector sizes, post-processing thresholds, loss weights."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Config:
    num_queries: int = 50
    num_iterations: int = 4
    channels: int = 64
    num_heads: int = 8
    roi_grid: int = 7
    clip_length: int = 36
    clip_stride: int = 18
    keep_top: int = 10
    blink_threshold: float = 0.3
    link_iou_threshold: float = 0.5
    lambda_blink: float = 5.0
    w_cls: float = 2.0
    w_l1: float = 5.0
    w_giou: float = 2.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("num_queries", "num_iterations", "channels", "num_heads", "roi_grid",
                     "clip_length", "clip_stride", "keep_top"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"config.{name} must be a positive integer, got {value!r}")
        if self.channels % self.num_heads:
            raise ValueError(
                f"config.channels {self.channels} must be divisible by num_heads {self.num_heads}"
            )
        if self.channels % 4:
            raise ValueError(f"config.channels {self.channels} must be divisible by 4")
        if self.clip_stride >= self.clip_length:
            raise ValueError(
                f"config.clip_stride {self.clip_stride} must be < clip_length {self.clip_length} "
                "so adjacent clips overlap"
            )
        for name in ("blink_threshold", "link_iou_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"config.{name} must be in (0, 1), got {value!r}")
        for name in ("lambda_blink", "w_cls", "w_l1", "w_giou", "focal_gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"config.{name} must be >= 0")
        if not 0.0 <= self.focal_alpha <= 1.0:
            raise ValueError(f"config.focal_alpha must be in [0, 1], got {self.focal_alpha!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Config":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
