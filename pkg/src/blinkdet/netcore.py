"""Desk-scale forward pass of the query-based face and blink detector.

N spatio-temporal instance queries (each a T x C embedding paired with a
proposal tube of T normalized boxes, both tiled from learned per-query
seeds) are refined over M iterations. Each iteration runs:

  1. query interaction - self-attention across the N queries within each
     frame, then self-attention across the T frames within each query;
  2. video interaction - RoI-align the proposal tube on the video feature
     and filter it with two dynamic 1x1 convolutions whose weights are
     generated from the query embedding, then project back to C channels;
  3. shared heads - two-layer MLPs emitting per-frame face scores, face
     boxes (clamped, corner-ordered, and used as the next proposal tube),
     and blink scores.

Everything is float64 and a pure function of (feature, params): identical
inputs give bit-identical outputs. There are no positional encodings, so
permuting the query seeds permutes all outputs identically.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .anno_model import FrameBox

CONTAINER_MAGIC = b"BLKPACK1"
CONTAINER_VERSION = 1

DEFAULT_NUM_QUERIES = 50
DEFAULT_NUM_ITERATIONS = 4
DEFAULT_CHANNELS = 64
DEFAULT_NUM_HEADS = 8
DEFAULT_ROI_GRID = 7


@dataclass(frozen=True)
class VideoFeature:
    """Backbone feature volume of shape (T, C, H, W)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 4:
            raise ValueError(f"feature must have shape (T, C, H, W), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature entries must be finite")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class QueryState:
    """Current query embeddings (N, T, C) and proposal tubes (N, T, 4)."""

    queries: np.ndarray
    proposals: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.queries, dtype=float)
        p = np.asarray(self.proposals, dtype=float)
        if q.ndim != 3 or p.shape != (q.shape[0], q.shape[1], 4):
            raise ValueError(f"inconsistent state shapes {q.shape} / {p.shape}")
        if p.size and (
            p.min() < 0.0
            or p.max() > 1.0
            or np.any(p[..., 2] < p[..., 0])
            or np.any(p[..., 3] < p[..., 1])
        ):
            raise ValueError("proposals must be ordered corner boxes inside [0, 1]^2")
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "proposals", p)


@dataclass(frozen=True)
class AttentionParams:
    """Projection weights of one multi-head self-attention layer."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    bo: np.ndarray


@dataclass(frozen=True)
class MlpParams:
    """Two-layer MLP: relu(x @ w1 + b1) @ w2 + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True)
class StageParams:
    """Weights of one refinement iteration."""

    spatial_attn: AttentionParams
    temporal_attn: AttentionParams
    filter_gen: np.ndarray  # (C, 2 * C * hidden), bias-free by design
    update_w: np.ndarray  # (S * S * C, C)
    update_b: np.ndarray  # (C,)
    face_score_head: MlpParams
    face_box_head: MlpParams
    blink_head: MlpParams


@dataclass(frozen=True)
class ModelParams:
    """All learned arrays plus the hyperparameters they were shaped for."""

    num_queries: int
    num_iterations: int
    channels: int
    num_heads: int
    roi_grid: int
    query_seed: np.ndarray  # (N, C)
    proposal_seed: np.ndarray  # (N, 4), valid normalized boxes
    stages: tuple[StageParams, ...]

    def __post_init__(self):
        if self.channels % self.num_heads:
            raise ValueError(
                f"channels {self.channels} not divisible by num_heads {self.num_heads}"
            )
        if self.channels % 4:
            raise ValueError(f"channels {self.channels} not divisible by 4")
        if len(self.stages) != self.num_iterations:
            raise ValueError(
                f"expected {self.num_iterations} stages, got {len(self.stages)}"
            )
        if self.query_seed.shape != (self.num_queries, self.channels):
            raise ValueError(f"query seed shape {self.query_seed.shape} inconsistent")
        if self.proposal_seed.shape != (self.num_queries, 4):
            raise ValueError(f"proposal seed shape {self.proposal_seed.shape} inconsistent")

    @property
    def hidden_channels(self) -> int:
        return self.channels // 4


@dataclass(frozen=True)
class StageOutput:
    """Per-iteration head outputs: face scores (N, T), boxes (N, T, 4), blink scores (N, T)."""

    face_scores: np.ndarray
    boxes: np.ndarray
    blink_scores: np.ndarray


@dataclass(frozen=True)
class ModelOutput:
    """Head outputs of every iteration; the last one is the prediction."""

    stages: tuple[StageOutput, ...]

    @property
    def final(self) -> StageOutput:
        return self.stages[-1]


def init_queries(params: ModelParams, num_frames: int) -> QueryState:
    """Tile the per-query seeds along the temporal axis: q[i, t] = seed q[i]."""
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")
    queries = np.repeat(params.query_seed[:, None, :], num_frames, axis=1)
    proposals = np.repeat(params.proposal_seed[:, None, :], num_frames, axis=1)
    return QueryState(queries, proposals)


def mhsa(
    x: np.ndarray,
    attn: AttentionParams,
    num_heads: int,
    return_weights: bool = False,
):
    """Multi-head scaled dot-product self-attention with a residual connection.

    x is (L, C). Per head: softmax(Q K^T / sqrt(C / num_heads)) V; heads are
    concatenated, output-projected, and added back onto x. No positional
    encoding, so the map is equivariant to permutations of the L inputs.
    """
    x = np.asarray(x, dtype=float)
    length, channels = x.shape
    if channels % num_heads:
        raise ValueError(f"channels {channels} not divisible by num_heads {num_heads}")
    dk = channels // num_heads

    q = (x @ attn.wq + attn.bq).reshape(length, num_heads, dk).transpose(1, 0, 2)
    k = (x @ attn.wk + attn.bk).reshape(length, num_heads, dk).transpose(1, 0, 2)
    v = (x @ attn.wv + attn.bv).reshape(length, num_heads, dk).transpose(1, 0, 2)

    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dk)
    scores = scores - scores.max(axis=-1, keepdims=True)  # stabilized softmax
    weights = np.exp(scores)
    weights = weights / weights.sum(axis=-1, keepdims=True)

    context = (weights @ v).transpose(1, 0, 2).reshape(length, channels)
    out = x + (context @ attn.wo + attn.bo)
    if return_weights:
        return out, weights
    return out


def query_interaction(qs: QueryState, stage: StageParams, num_heads: int) -> QueryState:
    """Self-attention across queries per frame, then across frames per query."""
    queries = qs.queries
    num_queries, num_frames, _ = queries.shape

    spatial = np.empty_like(queries)
    for t in range(num_frames):
        spatial[:, t, :] = mhsa(queries[:, t, :], stage.spatial_attn, num_heads)

    temporal = np.empty_like(spatial)
    for i in range(num_queries):
        temporal[i] = mhsa(spatial[i], stage.temporal_attn, num_heads)

    return QueryState(temporal, qs.proposals)


def _roi_align_boxes(fmap: np.ndarray, boxes: np.ndarray, grid: int) -> np.ndarray:
    """Bilinear RoI pooling of one frame for many boxes: (n, 4) -> (n, S, S, C).

    Each bin takes one bilinear sample at its center. Feature cell (r, c) is
    treated as the value at continuous coordinates (c + 0.5, r + 0.5);
    samples are edge-clamped.
    """
    channels, fh, fw = fmap.shape
    boxes = np.asarray(boxes, dtype=float)
    steps = (np.arange(grid) + 0.5) / grid

    x_lo, x_hi = boxes[:, 0] * fw, boxes[:, 2] * fw
    y_lo, y_hi = boxes[:, 1] * fh, boxes[:, 3] * fh
    xs = x_lo[:, None] + steps[None, :] * (x_hi - x_lo)[:, None]  # (n, S)
    ys = y_lo[:, None] + steps[None, :] * (y_hi - y_lo)[:, None]

    u = np.clip(xs - 0.5, 0.0, fw - 1.0)
    v = np.clip(ys - 0.5, 0.0, fh - 1.0)
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    u1 = np.minimum(u0 + 1, fw - 1)
    v1 = np.minimum(v0 + 1, fh - 1)
    fu = u - u0
    fv = v - v0

    fm = fmap.transpose(1, 2, 0)  # (H, W, C) for gathering
    rows0, rows1 = v0[:, :, None], v1[:, :, None]  # (n, S, 1): y indexes rows
    cols0, cols1 = u0[:, None, :], u1[:, None, :]  # (n, 1, S): x indexes cols
    wy = fv[:, :, None]
    wx = fu[:, None, :]

    out = (
        fm[rows0, cols0] * ((1.0 - wy) * (1.0 - wx))[..., None]
        + fm[rows0, cols1] * ((1.0 - wy) * wx)[..., None]
        + fm[rows1, cols0] * (wy * (1.0 - wx))[..., None]
        + fm[rows1, cols1] * (wy * wx)[..., None]
    )
    return out


def roi_align(feature: VideoFeature, box: FrameBox, frame_index: int, grid: int) -> np.ndarray:
    """RoI-align one normalized box on one frame; returns (S, S, C)."""
    boxes = np.array([[box.x1, box.y1, box.x2, box.y2]], dtype=float)
    return _roi_align_boxes(feature.values[frame_index], boxes, grid)[0]


def video_interaction(
    qs: QueryState, feature: VideoFeature, stage: StageParams, roi_grid: int
) -> np.ndarray:
    """Update query features from the video: RoI + dynamic filtering; returns (N, T, C).

    Per (query, frame): two filter banks (C -> C/4 -> C) are generated from
    the query embedding by a bias-free linear map and applied to the RoI
    feature as consecutive 1x1 convolutions with a ReLU between them; the
    result is flattened and linearly projected back to C channels.
    """
    queries = qs.queries
    num_queries, num_frames, channels = queries.shape
    hidden = channels // 4
    bins = roi_grid * roi_grid

    out = np.empty((num_queries, num_frames, channels))
    for t in range(num_frames):
        roi = _roi_align_boxes(feature.values[t], qs.proposals[:, t, :], roi_grid)
        x = roi.reshape(num_queries, bins, channels)
        filters = queries[:, t, :] @ stage.filter_gen  # (N, 2 * C * hidden)
        m1 = filters[:, : channels * hidden].reshape(num_queries, channels, hidden)
        m2 = filters[:, channels * hidden :].reshape(num_queries, hidden, channels)
        h1 = np.maximum(x @ m1, 0.0)
        h2 = h1 @ m2
        out[:, t, :] = h2.reshape(num_queries, bins * channels) @ stage.update_w + stage.update_b
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _mlp(x: np.ndarray, p: MlpParams) -> np.ndarray:
    return np.maximum(x @ p.w1 + p.b1, 0.0) @ p.w2 + p.b2


def _sanitize_boxes(raw: np.ndarray) -> np.ndarray:
    """Clamp raw box outputs to [0, 1] and enforce corner ordering."""
    clipped = np.clip(raw, 0.0, 1.0)
    boxes = np.empty_like(clipped)
    boxes[..., 0] = np.minimum(clipped[..., 0], clipped[..., 2])
    boxes[..., 2] = np.maximum(clipped[..., 0], clipped[..., 2])
    boxes[..., 1] = np.minimum(clipped[..., 1], clipped[..., 3])
    boxes[..., 3] = np.maximum(clipped[..., 1], clipped[..., 3])
    return boxes


def heads_forward(q_updated: np.ndarray, stage: StageParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared prediction heads on the updated query features (N, T, C).

    Returns face scores (N, T) in (0, 1), valid normalized boxes (N, T, 4)
    that also renew the proposal tube, and blink scores (N, T) in (0, 1).
    """
    num_queries, num_frames, channels = q_updated.shape
    flat = q_updated.reshape(num_queries * num_frames, channels)
    face = _sigmoid(_mlp(flat, stage.face_score_head)).reshape(num_queries, num_frames)
    blink = _sigmoid(_mlp(flat, stage.blink_head)).reshape(num_queries, num_frames)
    raw_boxes = _mlp(flat, stage.face_box_head).reshape(num_queries, num_frames, 4)
    boxes = _sanitize_boxes(raw_boxes)
    return face, boxes, blink


def detector_forward(feature: VideoFeature, params: ModelParams) -> ModelOutput:
    """Full forward pass: init queries, M refinement iterations, per-iteration outputs."""
    num_frames, channels = feature.values.shape[:2]
    if channels != params.channels:
        raise ValueError(
            f"feature has {channels} channels but params expect {params.channels}"
        )
    qs = init_queries(params, num_frames)
    stage_outputs = []
    for stage in params.stages:
        qs = query_interaction(qs, stage, params.num_heads)
        q_updated = video_interaction(qs, feature, stage, params.roi_grid)
        face, boxes, blink = heads_forward(q_updated, stage)
        stage_outputs.append(StageOutput(face, boxes, blink))
        qs = QueryState(q_updated, boxes)
    return ModelOutput(tuple(stage_outputs))


def sanitize_seed_boxes(raw: np.ndarray) -> np.ndarray:
    """Make arbitrary (N, 4) floats valid normalized corner boxes."""
    return _sanitize_boxes(np.clip(np.asarray(raw, dtype=float), 0.0, 1.0))


def random_params(
    num_queries: int = DEFAULT_NUM_QUERIES,
    num_iterations: int = DEFAULT_NUM_ITERATIONS,
    channels: int = DEFAULT_CHANNELS,
    num_heads: int = DEFAULT_NUM_HEADS,
    roi_grid: int = DEFAULT_ROI_GRID,
    seed: int = 0,
) -> ModelParams:
    """Deterministic seeded parameters: every weight uniform in [-0.05, 0.05].

    Proposal seeds are a centered box jittered by the same uniform noise and
    then sanitized, so they start as valid normalized boxes.
    """
    rng = np.random.default_rng(seed)
    hidden = channels // 4
    bins = roi_grid * roi_grid

    def u(*shape: int) -> np.ndarray:
        return rng.uniform(-0.05, 0.05, shape)

    def attention() -> AttentionParams:
        return AttentionParams(
            wq=u(channels, channels),
            wk=u(channels, channels),
            wv=u(channels, channels),
            wo=u(channels, channels),
            bq=u(channels),
            bk=u(channels),
            bv=u(channels),
            bo=u(channels),
        )

    def mlp(out_dim: int) -> MlpParams:
        return MlpParams(w1=u(channels, channels), b1=u(channels), w2=u(channels, out_dim), b2=u(out_dim))

    query_seed = u(num_queries, channels)
    proposal_seed = sanitize_seed_boxes(
        np.array([0.25, 0.25, 0.75, 0.75]) + u(num_queries, 4)
    )
    stages = tuple(
        StageParams(
            spatial_attn=attention(),
            temporal_attn=attention(),
            filter_gen=u(channels, 2 * channels * hidden),
            update_w=u(bins * channels, channels),
            update_b=u(channels),
            face_score_head=mlp(1),
            face_box_head=mlp(4),
            blink_head=mlp(1),
        )
        for _ in range(num_iterations)
    )
    return ModelParams(
        num_queries=num_queries,
        num_iterations=num_iterations,
        channels=channels,
        num_heads=num_heads,
        roi_grid=roi_grid,
        query_seed=query_seed,
        proposal_seed=proposal_seed,
        stages=stages,
    )


# ---------------------------------------------------------------------------
# Binary container: named float64 arrays with a JSON header.
# Layout: 8-byte magic, uint32 LE header length, UTF-8 JSON header, payload of
# row-major little-endian float64 arrays at the offsets listed in the header.
# ---------------------------------------------------------------------------


def write_container(path, arrays: dict[str, np.ndarray], meta: Optional[dict] = None) -> None:
    """Write named arrays to the self-describing binary container."""
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.nbytes
    header = {"version": CONTAINER_VERSION, "meta": meta or {}, "arrays": entries}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for chunk in chunks:
            fh.write(chunk)


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container back; returns ({name: array}, meta)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CONTAINER_MAGIC))
        if magic != CONTAINER_MAGIC:
            raise ValueError(f"{path}: not an array container (bad magic {magic!r})")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if "version" not in header:
            raise ValueError(f"{path}: container header missing version field")
        if header["version"] != CONTAINER_VERSION:
            raise ValueError(f"{path}: unsupported container version {header['version']}")
        payload = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arrays[entry["name"]] = (
            np.frombuffer(payload, dtype="<f8", count=count, offset=start)
            .reshape(shape)
            .astype(float)
        )
    return arrays, header.get("meta", {})


def _stage_array_names(index: int) -> list[tuple[str, str, str]]:
    """(container name, attention field, weight name) triples of one stage."""
    names = []
    for attn in ("spatial_attn", "temporal_attn"):
        for w in ("wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo"):
            names.append((f"stage{index}.{attn}.{w}", attn, w))
    return names


def params_to_arrays(params: ModelParams) -> dict[str, np.ndarray]:
    arrays = {"query_seed": params.query_seed, "proposal_seed": params.proposal_seed}
    for si, stage in enumerate(params.stages):
        for name, attn_field, w in _stage_array_names(si):
            arrays[name] = getattr(getattr(stage, attn_field), w)
        arrays[f"stage{si}.filter_gen"] = stage.filter_gen
        arrays[f"stage{si}.update_w"] = stage.update_w
        arrays[f"stage{si}.update_b"] = stage.update_b
        for head in ("face_score_head", "face_box_head", "blink_head"):
            mlp = getattr(stage, head)
            for w in ("w1", "b1", "w2", "b2"):
                arrays[f"stage{si}.{head}.{w}"] = getattr(mlp, w)
    return arrays


def params_from_arrays(arrays: dict[str, np.ndarray], meta: dict) -> ModelParams:
    def grab(name: str) -> np.ndarray:
        if name not in arrays:
            raise ValueError(f"weights container missing array {name!r}")
        return arrays[name]

    num_iterations = int(meta["num_iterations"])
    stages = []
    for si in range(num_iterations):
        attn = {}
        for field in ("spatial_attn", "temporal_attn"):
            attn[field] = AttentionParams(
                **{w: grab(f"stage{si}.{field}.{w}") for w in ("wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo")}
            )
        heads = {
            head: MlpParams(**{w: grab(f"stage{si}.{head}.{w}") for w in ("w1", "b1", "w2", "b2")})
            for head in ("face_score_head", "face_box_head", "blink_head")
        }
        stages.append(
            StageParams(
                spatial_attn=attn["spatial_attn"],
                temporal_attn=attn["temporal_attn"],
                filter_gen=grab(f"stage{si}.filter_gen"),
                update_w=grab(f"stage{si}.update_w"),
                update_b=grab(f"stage{si}.update_b"),
                face_score_head=heads["face_score_head"],
                face_box_head=heads["face_box_head"],
                blink_head=heads["blink_head"],
            )
        )
    return ModelParams(
        num_queries=int(meta["num_queries"]),
        num_iterations=num_iterations,
        channels=int(meta["channels"]),
        num_heads=int(meta["num_heads"]),
        roi_grid=int(meta["roi_grid"]),
        query_seed=grab("query_seed"),
        proposal_seed=grab("proposal_seed"),
        stages=tuple(stages),
    )


def save_params(path, params: ModelParams, seed: Optional[int] = None) -> None:
    """Write model weights to the binary container, hyperparameters in the header."""
    meta = {
        "kind": "weights",
        "num_queries": params.num_queries,
        "num_iterations": params.num_iterations,
        "channels": params.channels,
        "num_heads": params.num_heads,
        "roi_grid": params.roi_grid,
    }
    if seed is not None:
        meta["seed"] = seed
    write_container(path, params_to_arrays(params), meta)


def load_params(path) -> ModelParams:
    """Load model weights; shape and divisibility checks run on construction."""
    arrays, meta = read_container(path)
    if meta.get("kind") != "weights":
        raise ValueError(f"{path}: container is not a weights file (kind={meta.get('kind')!r})")
    return params_from_arrays(arrays, meta)
