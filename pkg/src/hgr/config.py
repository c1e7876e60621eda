"""Experiment configuration: one canonical JSON document with every default spelled out."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .synthetic import WorldSpec
from .train import TrainConfig

ABLATIONS = {
    "no-graph-attention": "no_graph_attention",
    "no-role-awareness": "no_role_awareness",
    "no-hier-video": "no_hierarchical_video",
}


@dataclass
class ModelShape:
    word_dim: int = 32
    lstm_hidden: int = 64
    max_frames: int = 32


@dataclass
class EvalOptions:
    split: str = "test"
    topk: int = 5
    per_level: bool = False
    bench_seed: int = 0


@dataclass
class ExperimentConfig:
    mode: str = "synthetic"          # or "external"
    data_dir: str = "data/synthetic"
    out_dir: str = "runs/default"
    world: WorldSpec = field(default_factory=lambda: WorldSpec(n_videos=448, split=(320, 64, 64)))
    model: ModelShape = field(default_factory=ModelShape)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=32, joint_dim=64))
    eval: EvalOptions = field(default_factory=EvalOptions)

    def __post_init__(self):
        if self.mode not in ("synthetic", "external"):
            raise ValueError(f"mode must be 'synthetic' or 'external', got {self.mode!r}")

    def to_dict(self):
        d = asdict(self)
        d["world"]["split"] = list(self.world.split)
        return d

    def canonical(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def pretty(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def hash(self):
        """Identity of the experiment; where its outputs are written is not part of it."""
        d = self.to_dict()
        del d["out_dir"]
        return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config sections {sorted(unknown)}")
        kw = dict(d)
        if "world" in kw:
            w = dict(kw["world"])
            if "split" in w:
                w["split"] = tuple(w["split"])
            kw["world"] = _build(WorldSpec, w, "world")
        if "model" in kw:
            kw["model"] = _build(ModelShape, kw["model"], "model")
        if "train" in kw:
            kw["train"] = TrainConfig.from_dict(kw["train"])
        if "eval" in kw:
            kw["eval"] = _build(EvalOptions, kw["eval"], "eval")
        return cls(**kw)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(self.pretty())


def _build(klass, d, section):
    names = {f.name for f in fields(klass)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown options in [{section}]: {sorted(unknown)}")
    return klass(**d)
