"""The full retrieval model: parameters, encoders and scoring wired together."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff.params import ParameterStore
from .autodiff.tensor import no_grad
from .graph import NUM_ROLES
from .matching import batch_similarity, contrastive_loss
from .text import TextBatch, TextEncoderConfig, encode_text, init_text_params, relational_param_count
from .video import VideoBatch, encode_video, init_video_params

LEVELS = ("event", "action", "entity", "fusion")


@dataclass
class ModelConfig:
    vocab_size: int
    feature_dim: int = 2048
    word_dim: int = 300
    lstm_hidden: int = 1024
    joint_dim: int = 1024
    num_layers: int = 2
    role_count: int = NUM_ROLES
    lam: float = 4.0
    normalize_local: str = "sum"
    max_frames: int = 32
    no_graph_attention: bool = False
    no_role_awareness: bool = False
    no_hierarchical_video: bool = False

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.normalize_local not in ("sum", "mean"):
            raise ValueError("normalize_local must be 'sum' or 'mean'")

    @classmethod
    def desk(cls, vocab_size, feature_dim=128, **kw):
        base = dict(word_dim=32, lstm_hidden=64, joint_dim=64, max_frames=32)
        base.update(kw)
        return cls(vocab_size=vocab_size, feature_dim=feature_dim, **base)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self):
        return asdict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def text_config(self):
        return TextEncoderConfig(self.vocab_size, self.word_dim, self.lstm_hidden, self.joint_dim,
                                 self.num_layers, self.role_count, self.no_graph_attention,
                                 self.no_role_awareness)


class HGRModel:
    def __init__(self, cfg: ModelConfig, vocab, seed=0, dtype=np.float32, params=None, pretrained=None):
        if len(vocab) != cfg.vocab_size:
            raise ValueError(f"vocabulary has {len(vocab)} entries, config says {cfg.vocab_size}")
        self.cfg = cfg
        self.vocab = vocab
        if params is None:
            params = ParameterStore(seed, dtype=dtype)
            init_text_params(params, cfg.text_config(), pretrained)
            init_video_params(params, cfg.feature_dim, cfg.joint_dim, cfg.no_hierarchical_video)
        self.params = params

    def relational_param_count(self):
        return relational_param_count(self.params, self.cfg.text_config())

    # -- batching helpers ---------------------------------------------------
    def text_batch(self, graphs):
        return TextBatch.from_graphs(graphs, self.vocab)

    def video_batch(self, videos):
        return VideoBatch.from_features(videos, self.cfg.feature_dim, self.cfg.max_frames, dtype=self.params.dtype)

    # -- forward ------------------------------------------------------------
    def encode_text(self, batch, params=None):
        return encode_text(params or self.params, self.cfg.text_config(), batch)

    def encode_video(self, batch, params=None):
        return encode_video(params or self.params, batch)

    def similarity(self, vbatch, tbatch, params=None, keep_diagnostics=False):
        p = params or self.params
        v = self.encode_video(vbatch, p)
        t = self.encode_text(tbatch, p)
        return batch_similarity(v, t, self.cfg.lam, self.cfg.normalize_local, keep_diagnostics)

    def loss(self, vbatch, tbatch, margin=0.2, params=None):
        return contrastive_loss(self.similarity(vbatch, tbatch, params).fused, margin)

    def score_matrix(self, videos, graphs, chunk=64):
        """All-pairs scores per level as numpy arrays (videos x captions), no gradients."""
        out = {lvl: np.zeros((len(videos), len(graphs))) for lvl in LEVELS}
        with no_grad():
            venc = [(i, self.encode_video(self.video_batch(videos[i:i + chunk])))
                    for i in range(0, len(videos), chunk)]
            for j in range(0, len(graphs), chunk):
                t = self.encode_text(self.text_batch(graphs[j:j + chunk]))
                for i, v in venc:
                    sims = batch_similarity(v, t, self.cfg.lam, self.cfg.normalize_local)
                    for lvl in LEVELS:
                        out[lvl][i:i + v.event.shape[0], j:j + t.event.shape[0]] = sims.level(lvl).data
        return out
