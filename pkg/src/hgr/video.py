"""Three-level video embeddings from frame features, and the HGRF feature file format."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import ops
from .autodiff.tensor import ShapeError, Tensor
from .text import attention_pool

FEATURE_MAGIC = b"HGRF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sBII")


class FeatureFileError(ValueError):
    pass


@dataclass
class VideoFeatures:
    video_id: str
    frames: np.ndarray  # (M, D_f)
    source: str = "synthetic"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"{self.video_id}: frames must be (M>=1, D_f), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError(f"{self.video_id}: non-finite frame features")


def write_features(path, frames):
    frames = np.ascontiguousarray(frames, dtype="<f4")
    M, Df = frames.shape
    Path(path).write_bytes(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, M, Df) + frames.tobytes())


def read_features(path):
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FeatureFileError(f"{path}: file too short for HGRF header")
    magic, version, M, Df = _HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if version != FEATURE_VERSION:
        raise FeatureFileError(f"{path}: unsupported HGRF version {version}")
    if len(blob) != _HEADER.size + 4 * M * Df:
        raise FeatureFileError(f"{path}: expected {M}x{Df} reals, payload has {len(blob) - _HEADER.size} bytes")
    if M < 1 or Df < 1:
        raise FeatureFileError(f"{path}: empty feature matrix {M}x{Df}")
    return np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(M, Df).astype(np.float32)


def write_feature_manifest(path, entries):
    """entries: iterable of (video_id, feature path relative to the manifest)."""
    with open(path, "w") as fh:
        for vid, fp in entries:
            fh.write(json.dumps({"video_id": vid, "path": str(fp)}, sort_keys=True) + "\n")


def read_feature_manifest(path):
    out = {}
    base = Path(path).parent
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out[rec["video_id"]] = base / rec["path"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise FeatureFileError(f"{path}:{lineno}: bad manifest record ({exc})") from None
    return out


def subsample(frames, max_frames):
    """Keep at most ``max_frames`` uniformly spaced frames (deterministic)."""
    M = frames.shape[0]
    if M <= max_frames:
        return frames
    idx = np.floor(np.arange(max_frames) * (M / max_frames)).astype(np.int64)
    return frames[idx]


@dataclass
class VideoBatch:
    frames: np.ndarray  # (B, M, D_f) zero padded
    mask: np.ndarray    # (B, M) bool

    @property
    def size(self):
        return self.frames.shape[0]

    @classmethod
    def from_features(cls, videos, feature_dim, max_frames=32, dtype=np.float32):
        if not videos:
            raise ValueError("empty video batch")
        mats = []
        for v in videos:
            if v.frames.shape[1] != feature_dim:
                raise ShapeError("project_levels", v.frames.shape,
                                 detail=f"{v.video_id}: expected D_f={feature_dim}, got {v.frames.shape[1]}")
            mats.append(subsample(v.frames, max_frames))
        M = max(m.shape[0] for m in mats)
        out = np.zeros((len(mats), M, feature_dim), dtype=dtype)
        mask = np.zeros((len(mats), M), dtype=bool)
        for b, m in enumerate(mats):
            out[b, : len(m)] = m
            mask[b, : len(m)] = True
        return cls(out, mask)


@dataclass
class VideoEmbeddings:
    event: Tensor          # (B, D)
    action_frames: Tensor  # (B*M, D)
    entity_frames: Tensor  # (B*M, D)
    mask: np.ndarray       # (B, M)
    frame_attention: Tensor


def init_video_params(store, feature_dim, dim, no_hierarchical_video=False):
    if no_hierarchical_video:
        store.add("video.W_shared", (dim, feature_dim))
    else:
        for lvl in ("e", "a", "o"):
            store.add(f"video.W_{lvl}", (dim, feature_dim))
    store.add("video.event_attn.w", (1, dim))


def project_levels(p, frames):
    """frames (n, D_f) -> three (n, D) projections without bias."""
    if "video.W_shared" in p:
        w = p["video.W_shared"]
        x = ops.linear(frames, w)
        return x, x, x
    want = p["video.W_e"].shape[1]
    if frames.shape[1] != want:
        raise ShapeError("project_levels", frames.shape, detail=f"expected D_f={want}, got {frames.shape[1]}")
    return tuple(ops.linear(frames, p[f"video.W_{lvl}"]) for lvl in ("e", "a", "o"))


def video_event_pool(p, event_frames, mask):
    B, M = mask.shape
    seq = event_frames.reshape(B, M, event_frames.shape[1])
    return attention_pool(seq, p["video.event_attn.w"], mask.sum(axis=1))


def encode_video(p, batch):
    B, M, Df = batch.frames.shape
    flat = Tensor(batch.frames.reshape(B * M, Df).astype(p["video.event_attn.w"].dtype))
    ve, va, vo = project_levels(p, flat)
    pooled, alpha = video_event_pool(p, ve, batch.mask)
    return VideoEmbeddings(pooled, va, vo, batch.mask, alpha)
