"""On-disk dataset layout, loading and validation.

Layout of a dataset directory::

    features.jsonl    {"video_id", "path"} per line, paths relative to the directory
    features/*.hgrf   one HGRF matrix per video
    captions.jsonl    {"caption_id", "video_id", "text", "graph"} per line
    splits.json       {"train": [video ids], "val": [...], "test": [...]}
    vocab.json        token -> id
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import GraphError, graph_from_dict, graph_to_dict
from .text import Vocabulary
from .video import FeatureFileError, VideoFeatures, read_feature_manifest, read_features, write_feature_manifest, write_features

SPLITS = ("train", "val", "test")


class DatasetError(ValueError):
    """Carries every problem found, each as "location: message"."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


@dataclass
class Caption:
    caption_id: str
    video_id: str
    text: str
    graph: object


@dataclass
class Dataset:
    videos: dict                      # video id -> VideoFeatures
    captions: list                    # Caption
    splits: dict = field(default_factory=dict)
    vocab: Vocabulary | None = None

    @property
    def feature_dim(self):
        return next(iter(self.videos.values())).frames.shape[1]

    def split(self, name):
        """(videos, captions, caption_video) for a split; caption_video indexes the returned video list."""
        ids = self.splits[name] if name != "all" else sorted(self.videos)
        pos = {v: i for i, v in enumerate(ids)}
        caps = [c for c in self.captions if c.video_id in pos]
        return [self.videos[v] for v in ids], caps, np.array([pos[c.video_id] for c in caps], dtype=np.int64)


def data_root(path):
    """Resolve a relative dataset path against $HGR_DATA_DIR when it is not found as given."""
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    root = os.environ.get("HGR_DATA_DIR")
    return Path(root) / p if root else p


def _dump_jsonl(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")


def write_dataset(ds: Dataset, out):
    out = Path(out)
    (out / "features").mkdir(parents=True, exist_ok=True)
    entries = []
    for vid in sorted(ds.videos):
        rel = Path("features") / f"{vid}.hgrf"
        write_features(out / rel, ds.videos[vid].frames)
        entries.append((vid, rel.as_posix()))
    write_feature_manifest(out / "features.jsonl", entries)
    _dump_jsonl(out / "captions.jsonl", ({"caption_id": c.caption_id, "video_id": c.video_id, "text": c.text,
                                          "graph": graph_to_dict(c.graph)} for c in ds.captions))
    (out / "splits.json").write_text(json.dumps(ds.splits, indent=1, sort_keys=True) + "\n")
    if ds.vocab is not None:
        ds.vocab.save(out / "vocab.json")
    return out


def read_captions(path):
    caps, problems = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
                cid = rec["caption_id"]
                caps.append(Caption(cid, rec["video_id"], rec["text"], graph_from_dict(rec["graph"])))
            except json.JSONDecodeError as exc:
                problems.append(f"{where}: malformed JSON ({exc})")
            except KeyError as exc:
                problems.append(f"{where}: missing field {exc}")
            except GraphError as exc:
                problems.append(f"{where}: caption {rec.get('caption_id')!r}: {exc} at {exc.path}")
    return caps, problems


def load_dataset(path, strict=True):
    root = data_root(path)
    problems = []
    if not root.is_dir():
        raise DatasetError([f"{root}: dataset directory not found"])
    for name in ("features.jsonl", "captions.jsonl", "splits.json"):
        if not (root / name).exists():
            problems.append(f"{root / name}: missing")
    if problems:
        raise DatasetError(problems)
    videos = {}
    try:
        manifest = read_feature_manifest(root / "features.jsonl")
    except FeatureFileError as exc:
        raise DatasetError([str(exc)]) from None
    for vid, fp in manifest.items():
        try:
            videos[vid] = VideoFeatures(vid, read_features(fp))
        except (FeatureFileError, OSError, ValueError) as exc:
            problems.append(f"{fp}: {exc}")
    dims = {v.frames.shape[1] for v in videos.values()}
    if len(dims) > 1:
        problems.append(f"{root / 'features.jsonl'}: mixed feature widths {sorted(dims)}")
    caps, cprob = read_captions(root / "captions.jsonl")
    problems += cprob
    for c in caps:
        if c.video_id not in videos:
            problems.append(f"{root / 'captions.jsonl'}: caption {c.caption_id!r} refers to unknown video {c.video_id!r}")
    try:
        splits = json.loads((root / "splits.json").read_text())
    except json.JSONDecodeError as exc:
        problems.append(f"{root / 'splits.json'}: malformed JSON ({exc})")
        splits = {}
    for name, ids in splits.items():
        for v in ids:
            if v not in videos:
                problems.append(f"{root / 'splits.json'}: split {name!r} lists unknown video {v!r}")
    vocab = None
    if (root / "vocab.json").exists():
        try:
            vocab = Vocabulary.load(root / "vocab.json")
        except (ValueError, json.JSONDecodeError) as exc:
            problems.append(f"{root / 'vocab.json'}: {exc}")
    if problems and strict:
        raise DatasetError(problems)
    ds = Dataset(videos, caps, splits, vocab)
    ds.problems = problems
    return ds


def validate_dataset(path):
    """Exhaustive check; returns a report dict with ``problems`` (empty when clean)."""
    try:
        ds = load_dataset(path, strict=False)
    except DatasetError as exc:
        return {"ok": False, "problems": exc.problems}
    problems = list(ds.problems)
    report = {"videos": len(ds.videos), "captions": len(ds.captions),
              "splits": {k: len(v) for k, v in ds.splits.items()}}
    seen = {}
    for c in ds.captions:
        if c.caption_id in seen:
            problems.append(f"captions.jsonl: duplicate caption id {c.caption_id!r}")
        seen[c.caption_id] = True
    with_caption = {c.video_id for c in ds.captions}
    for vid in sorted(ds.videos):
        if vid not in with_caption:
            problems.append(f"features.jsonl: video {vid!r} has no caption")
    if ds.vocab is not None and ds.captions:
        toks = [t for c in ds.captions for t in c.graph.tokens]
        report["vocab_size"] = len(ds.vocab)
        report["vocab_coverage"] = ds.vocab.coverage(toks)
    report["ok"] = not problems
    report["problems"] = problems
    return report
