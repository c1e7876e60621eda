"""Global, local attentive and fused video-text similarity; hardest-negative ranking loss."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.ops import EPS
from .autodiff.tensor import ShapeError, Tensor, as_tensor


@dataclass
class SimilarityBreakdown:
    s_event: float
    s_action: float
    s_entity: float
    s_fused: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"event": self.s_event, "action": self.s_action, "entity": self.s_entity, "fusion": self.s_fused}


def global_score(v_e, c_e):
    """Cosine between the video and caption event vectors."""
    return ops.cosine(v_e, c_e)


def local_attentive_scores(c_x, owner, n_captions, v_x, mask, lam, normalize_local="sum"):
    """Local attentive matching for every (video, caption) pair at once.

    c_x: (N, D) text nodes of all captions, ``owner[i]`` the caption of row i.
    v_x: (B_v * M, D) frame embeddings; ``mask`` (B_v, M) marks real frames.
    Returns a (B_v, n_captions) tensor of s_x and the diagnostics
    (s_ij as (N, B_v, M), phi as (N, B_v, M)).
    Captions without nodes at this level score 0.
    """
    Bv, M = mask.shape
    if c_x.shape[0] == 0:
        return Tensor(np.zeros((Bv, n_captions), dtype=v_x.dtype)), None
    N = c_x.shape[0]
    s = ops.cosine_matrix(c_x, v_x).reshape(N, Bv, M)
    pos = ops.relu(s)
    norm = ops.sqrt(ops.sum(ops.square(pos), axis=2, keepdims=True) + EPS)
    phi = ops.softmax(pos * lam / norm, axis=2, mask=mask[None, :, :])
    per_node = ops.sum(phi * s, axis=2)  # (N, B_v)
    owner = np.asarray(owner)
    member = (owner[:, None] == np.arange(n_captions)[None, :]).astype(v_x.dtype)
    if normalize_local == "mean":
        member = member / np.maximum(member.sum(axis=0, keepdims=True), 1)
    elif normalize_local != "sum":
        raise ValueError(f"normalize_local must be 'sum' or 'mean', got {normalize_local!r}")
    return ops.matmul(ops.transpose(per_node), Tensor(member)), (s, phi)


def local_attentive_score(c_x, v_x, lam, normalize_local="sum"):
    """Single caption against a single video: c_x (N_x, D), v_x (M, D).

    Returns (s_x tensor of shape (1,), s_ij (N_x, M), phi (N_x, M)).
    """
    c_x, v_x = as_tensor(c_x), as_tensor(v_x)
    if c_x.ndim != 2 or v_x.ndim != 2 or (c_x.shape[0] and c_x.shape[1] != v_x.shape[1]):
        raise ShapeError("local_attentive_score", c_x.shape, v_x.shape)
    mask = np.ones((1, v_x.shape[0]), dtype=bool)
    out, diag = local_attentive_scores(c_x, np.zeros(c_x.shape[0], dtype=np.int64), 1, v_x, mask, lam,
                                       normalize_local)
    if diag is None:
        empty = np.zeros((0, v_x.shape[0]))
        return out.reshape(1), empty, empty
    return out.reshape(1), diag[0].data[:, 0, :], diag[1].data[:, 0, :]


def fuse(s_e, s_a, s_o):
    return (s_e + s_a + s_o) * (1.0 / 3.0)


@dataclass
class SimilarityMatrices:
    """Per-level and fused scores, rows = videos, columns = captions."""

    event: Tensor
    action: Tensor
    entity: Tensor
    fused: Tensor
    diagnostics: dict = field(default_factory=dict)

    def level(self, name):
        return {"event": self.event, "action": self.action, "entity": self.entity, "fusion": self.fused}[name]


def batch_similarity(video, text, lam=4.0, normalize_local="sum", keep_diagnostics=False):
    """Fused similarity between every video in ``video`` and every caption in ``text``."""
    Bc = text.event.shape[0]
    Bv = video.event.shape[0]
    if Bc == 0 or Bv == 0:
        raise ValueError("batch_similarity needs at least one video and one caption")
    s_e = ops.cosine_matrix(video.event, text.event)
    s_a, da = local_attentive_scores(text.actions, text.action_owner, Bc, video.action_frames, video.mask,
                                     lam, normalize_local)
    s_o, do = local_attentive_scores(text.entities, text.entity_owner, Bc, video.entity_frames, video.mask,
                                     lam, normalize_local)
    diag = {}
    if keep_diagnostics:
        diag = {"action": da, "entity": do, "action_owner": text.action_owner, "entity_owner": text.entity_owner}
    return SimilarityMatrices(s_e, s_a, s_o, fuse(s_e, s_a, s_o), diag)


def contrastive_loss(sim, margin=0.2):
    """Mean over positives (the diagonal) of the two hardest-negative hinge terms.

    sim[i, j] = s(video_i, caption_j).
    """
    sim = as_tensor(sim)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ShapeError("contrastive_loss", sim.shape, detail="needs a square matrix")
    B = sim.shape[0]
    if B == 1:
        return ops.sum(sim * 0.0)
    eye = np.eye(B, dtype=bool)
    pos = ops.sum(sim * eye.astype(sim.dtype), axis=1)
    blocked = sim + np.where(eye, -np.inf, 0.0).astype(sim.dtype)
    hardest_caption = ops.max(blocked, axis=1)  # per video row
    hardest_video = ops.max(blocked, axis=0)    # per caption column
    cost = ops.relu(hardest_caption - pos + margin) + ops.relu(hardest_video - pos + margin)
    return ops.mean(cost).reshape(1)


def contrastive_loss_reference(sim, margin=0.2):
    """Exhaustive double loop over (i, j); used as an oracle."""
    sim = np.asarray(sim, dtype=float)
    B = sim.shape[0]
    total = 0.0
    for i in range(B):
        worst_c = worst_v = -np.inf
        for j in range(B):
            if j == i:
                continue
            worst_c = max(worst_c, sim[i, j])
            worst_v = max(worst_v, sim[j, i])
        if B > 1:
            total += max(0.0, margin + worst_c - sim[i, i]) + max(0.0, margin + worst_v - sim[i, i])
    return total / B


def diagnostics_json(sims, video_ids, caption_ids):
    """s_ij and phi matrices per (video, caption) pair at the local levels."""
    out = []
    for lvl in ("action", "entity"):
        d = sims.diagnostics.get(lvl)
        if d is None:
            continue
        s, phi = d
        owner = sims.diagnostics.get(f"{lvl}_owner")
        for ci, cid in enumerate(caption_ids):
            rows = np.flatnonzero(owner == ci) if owner is not None else []
            for vi, vid in enumerate(video_ids):
                out.append({"level": lvl, "video_id": vid, "caption_id": cid,
                            "s": s.data[rows, vi].tolist(), "phi": phi.data[rows, vi].tolist()})
    return json.dumps(out)
