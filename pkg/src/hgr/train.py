"""Adam with global-norm clipping, the training loop, and checkpoints with metadata."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff.params import CheckpointError, ParameterStore
from .autodiff.tensor import backward
from .metrics import retrieval_reports
from .model import HGRModel, ModelConfig
from .text import Vocabulary

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class NonFiniteGradient(TrainingError):
    def __init__(self, name):
        self.parameter = name
        super().__init__(f"non-finite gradient in parameter {name!r}")


class ConfigMismatch(CheckpointError):
    pass


@dataclass
class TrainConfig:
    margin: float = 0.2
    lam: float = 4.0
    batch_size: int = 128
    epochs: int = 50
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 2.0
    seed: int = 0
    joint_dim: int = 1024
    num_layers: int = 2
    no_graph_attention: bool = False
    no_role_awareness: bool = False
    no_hierarchical_video: bool = False
    normalize_local: str = "sum"

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for in-batch negatives")
        if self.normalize_local not in ("sum", "mean"):
            raise ValueError("normalize_local must be 'sum' or 'mean'")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training options {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


# -- optimizer -------------------------------------------------------------------

class Adam:
    """Adaptive-moment updates on a ParameterStore, after clipping the global gradient norm."""

    def __init__(self, params: ParameterStore, lr=2e-4, betas=(0.9, 0.999), eps=1e-8, clip_norm=2.0):
        self.params = params
        self.lr, self.betas, self.eps, self.clip_norm = lr, betas, eps, clip_norm
        self.t = 0
        self.m = {n: np.zeros_like(t.data) for n, t in params.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.items()}

    def step(self, grads):
        """Apply one update from ``grads`` (name -> array). Returns the pre-clip global norm."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(name)
        grads, norm = clip_by_global_norm(grads, self.clip_norm)
        self.t += 1
        b1, b2 = self.betas
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)
        return norm


def clip_by_global_norm(grads, threshold):
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
    if threshold and norm > threshold:
        return {n: g * (threshold / norm) for n, g in grads.items()}, norm
    return dict(grads), norm


# -- evaluation helper ------------------------------------------------------------

def evaluate(model, videos, graphs, caption_video, level="fusion"):
    mats = model.score_matrix(videos, graphs)
    t2v, v2t = retrieval_reports(mats[level], caption_video)
    return {"text_to_video": t2v.to_dict(), "video_to_text": v2t.to_dict(), "rsum": t2v.rsum + v2t.rsum}


# -- checkpoints -------------------------------------------------------------------

def save_checkpoint(stem, model, epoch, report, train_cfg=None):
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    model.params.save(stem)
    meta = {"epoch": epoch, "report": report, "config_hash": model.cfg.hash(), "model_config": model.cfg.to_dict(),
            "train_config": train_cfg.to_dict() if train_cfg else None}
    stem.with_suffix(".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    model.vocab.save(stem.with_suffix(".vocab.json"))
    return stem


def load_checkpoint(stem, expected: ModelConfig | None = None, override=False):
    """Rebuild the model stored under ``stem``; returns (model, metadata)."""
    stem = Path(stem)
    try:
        meta = json.loads(stem.with_suffix(".meta.json").read_text())
    except FileNotFoundError:
        raise CheckpointError(f"{stem}.meta.json: missing checkpoint metadata") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{stem}.meta.json: malformed ({exc})") from None
    cfg = ModelConfig.from_dict(meta["model_config"])
    if cfg.hash() != meta.get("config_hash"):
        raise CheckpointError(f"{stem}.meta.json: stored config does not match its own hash")
    if expected is not None and expected.hash() != cfg.hash() and not override:
        diff = {k: (v, expected.to_dict()[k]) for k, v in cfg.to_dict().items() if expected.to_dict()[k] != v}
        raise ConfigMismatch(f"{stem}: config hash {cfg.hash()} != expected {expected.hash()}; differing {diff}")
    params = ParameterStore.load(stem)
    vocab = Vocabulary.load(stem.with_suffix(".vocab.json"))
    return HGRModel(cfg, vocab, params=params), meta


# -- training loop ------------------------------------------------------------------

@dataclass
class TrainResult:
    model: HGRModel
    best_epoch: int
    best_report: dict
    best_params: ParameterStore
    history: list


def _check_inputs(model, videos, graphs, caption_video, what):
    if len(graphs) != len(caption_video):
        raise TrainingError(f"{what}: {len(graphs)} graphs but {len(caption_video)} caption->video links")
    for j, v in enumerate(caption_video):
        if not 0 <= v < len(videos) or videos[v] is None:
            raise TrainingError(f"{what}: caption {j} has no video features")
    for v in videos:
        if v.frames.shape[1] != model.cfg.feature_dim:
            raise TrainingError(f"{what}: video {v.video_id} has feature width {v.frames.shape[1]}, "
                                f"model expects {model.cfg.feature_dim}")


def train(model: HGRModel, cfg: TrainConfig, train_set, val_set=None, log_path=None, timing_path=None,
          select_on_train=False):
    """Train with in-batch hardest negatives; keep the parameters with the best validation rsum.

    ``train_set``/``val_set`` are ``(videos, graphs, caption_video)``. Batches
    are drawn from a permutation seeded by ``cfg.seed``; a final partial
    batch is dropped. The per-batch log lines are deterministic; wall-clock
    times go to ``timing_path``.
    """
    videos, graphs, cap_vid = train_set
    _check_inputs(model, videos, graphs, cap_vid, "train")
    if val_set is not None:
        _check_inputs(model, *val_set, "val")
    if len(graphs) < cfg.batch_size:
        raise TrainingError(f"train set has {len(graphs)} pairs, fewer than batch_size {cfg.batch_size}")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg.lr, (cfg.beta1, cfg.beta2), cfg.adam_eps, cfg.clip_norm)
    logf = open(log_path, "w") if log_path else None
    timef = open(timing_path, "w") if timing_path else None
    t0 = time.perf_counter()
    best = (-np.inf, 0, None, None)
    history = []
    sel = val_set if (val_set is not None and not select_on_train) else train_set
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(graphs))
            losses = []
            for b in range(len(order) // cfg.batch_size):
                idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                vb = model.video_batch([videos[cap_vid[j]] for j in idx])
                tb = model.text_batch([graphs[j] for j in idx])
                model.params.zero_grad()
                loss = model.loss(vb, tb, cfg.margin)
                lv = loss.item()
                if not np.isfinite(lv):
                    raise TrainingError(f"non-finite loss {lv} at epoch {epoch} batch {b}; caption ids {idx.tolist()}")
                backward(loss)
                opt.step(model.params.grads())
                losses.append(lv)
                if logf:
                    logf.write(json.dumps({"epoch": epoch, "batch": b, "loss": lv, "lr": cfg.lr}) + "\n")
                if timef:
                    timef.write(json.dumps({"epoch": epoch, "batch": b,
                                            "wallclock": round(time.perf_counter() - t0, 4)}) + "\n")
            report = evaluate(model, *sel)
            rec = {"epoch": epoch, "mean_loss": float(np.mean(losses)), "val": report}
            history.append(rec)
            if logf:
                logf.write(json.dumps({"epoch": epoch, "mean_loss": rec["mean_loss"], "val_rsum": report["rsum"]}) + "\n")
                logf.flush()
            log.info("epoch %d loss %.5f rsum %.2f", epoch, rec["mean_loss"], report["rsum"])
            if report["rsum"] > best[0]:
                best = (report["rsum"], epoch, report, model.params.copy())
    finally:
        if logf:
            logf.close()
        if timef:
            timef.close()
    return TrainResult(model, best[1], best[2], best[3], history)
