"""Hierarchical text encoder: Bi-LSTM words, attention/max pooling, role scaling, graph attention."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import ops
from .autodiff.lstm import lstm_sequence
from .autodiff.tensor import Tensor
from .graph import NUM_ROLES, ROLE_INDEX

PAD, OOV = 0, 1


class Vocabulary:
    """token -> id with 0 reserved for padding and 1 for out-of-vocabulary words."""

    def __init__(self, tokens=()):
        self.index = {"<pad>": PAD, "<oov>": OOV}
        for t in tokens:
            if t not in self.index:
                self.index[t] = len(self.index)

    @classmethod
    def build(cls, token_lists):
        return cls(sorted({t for toks in token_lists for t in toks}))

    def __len__(self):
        return len(self.index)

    def __contains__(self, token):
        return token in self.index

    def encode(self, tokens):
        return [self.index.get(t, OOV) for t in tokens]

    def coverage(self, tokens):
        tokens = list(tokens)
        return sum(t in self.index for t in tokens) / max(len(tokens), 1)

    def save(self, path):
        Path(path).write_text(json.dumps(self.index, indent=0, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        index = json.loads(Path(path).read_text())
        if index.get("<pad>") != PAD or index.get("<oov>") != OOV:
            raise ValueError(f"{path}: vocabulary must reserve id 0 for <pad> and 1 for <oov>")
        v = cls()
        v.index = {str(k): int(i) for k, i in index.items()}
        return v


def load_embeddings(path, vocab, dim):
    """Read "token v1 ... vdim" lines; returns (rows, found mask) aligned to vocab ids."""
    rows = np.zeros((len(vocab), dim))
    found = np.zeros(len(vocab), dtype=bool)
    with open(path, encoding="utf8") as fh:
        for line in fh:
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1 or parts[0] not in vocab.index:
                continue
            i = vocab.index[parts[0]]
            rows[i] = np.asarray(parts[1:], dtype=float)
            found[i] = True
    return rows, found


@dataclass
class TextEncoderConfig:
    vocab_size: int
    word_dim: int = 300
    lstm_hidden: int = 1024
    joint_dim: int = 1024
    num_layers: int = 2
    role_count: int = NUM_ROLES
    no_graph_attention: bool = False
    no_role_awareness: bool = False

    def __post_init__(self):
        for name in ("vocab_size", "word_dim", "lstm_hidden", "joint_dim", "num_layers", "role_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def init_text_params(store, cfg, pretrained=None):
    H, D = cfg.lstm_hidden, cfg.joint_dim
    emb = store.add("text.embed.W_c", (cfg.vocab_size, cfg.word_dim))
    if pretrained is not None:
        rows, found = pretrained
        emb.data[found] = rows[found].astype(emb.dtype)
    for d in ("fwd", "bwd"):
        store.add(f"text.lstm_{d}.W_ih", (4 * H, cfg.word_dim))
        store.add(f"text.lstm_{d}.W_hh", (4 * H, H))
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        store.add(f"text.lstm_{d}.b", (4 * H,), init=b)
    store.add("text.event_attn.W_e", (1, H))
    if H != D:
        store.add("text.lift.W", (D, H))
    store.add("text.role.W_r", (D, cfg.role_count), init="uniform", fan_in=cfg.role_count)
    store.add("text.gcn.W_q", (D, D))
    store.add("text.gcn.W_k", (D, D))
    for layer in range(1, cfg.num_layers + 1):
        store.add(f"text.gcn.W_t{layer}", (D, D))


def relational_param_count(store, cfg):
    """Parameters of the role-specific transformation: shared W_t per layer plus W_r."""
    n = store["text.role.W_r"].data.size
    for layer in range(1, cfg.num_layers + 1):
        n += store[f"text.gcn.W_t{layer}"].data.size
    return n


def naive_relational_param_count(num_layers, role_count, dim):
    """Per-role transformation matrices at every layer, as in an unfactorised relational GCN."""
    return len(NaiveRelationalLayer.shapes(num_layers, role_count, dim)) * dim * dim


class NaiveRelationalLayer:
    """Reference unfactorised relational transform: one D x D matrix per (layer, role)."""

    @staticmethod
    def shapes(num_layers, role_count, dim):
        return [(layer, role, dim, dim) for layer in range(num_layers) for role in range(role_count)]

    def __init__(self, store, num_layers, role_count, dim, prefix="naive"):
        self.weights = {}
        for layer, role, d1, d2 in self.shapes(num_layers, role_count, dim):
            self.weights[layer, role] = store.add(f"{prefix}.W_l{layer}_r{role}", (d1, d2))

    def count(self):
        return sum(w.data.size for w in self.weights.values())


# -- batching ---------------------------------------------------------------------

@dataclass
class TextBatch:
    """Index structures for a batch of graphs. Global node order: all events, all actions, all entities."""

    ids: np.ndarray          # (B, T)
    lengths: np.ndarray      # (B,)
    action_spans: np.ndarray  # (Na, 2) in flattened (B*T) word coordinates
    entity_spans: np.ndarray  # (No, 2)
    action_owner: np.ndarray  # (Na,)
    entity_owner: np.ndarray  # (No,)
    roles: np.ndarray        # (B+Na+No,) role index per node
    adjacency: np.ndarray    # (n, n) bool, symmetric, no self loops
    node_maps: list = field(default_factory=list)  # per graph: node id -> global index

    @property
    def size(self):
        return len(self.lengths)

    @classmethod
    def from_graphs(cls, graphs, vocab):
        B = len(graphs)
        if B == 0:
            raise ValueError("empty caption batch")
        T = max(len(g.tokens) for g in graphs)
        ids = np.zeros((B, T), dtype=np.int64)
        lengths = np.array([len(g.tokens) for g in graphs], dtype=np.int64)
        for b, g in enumerate(graphs):
            ids[b, : len(g.tokens)] = vocab.encode(g.tokens)
        acts = [(b, n) for b, g in enumerate(graphs) for n in g.actions]
        ents = [(b, n) for b, g in enumerate(graphs) for n in g.entities]

        def spans(items):
            return np.array([[b * T + n.span[0], b * T + n.span[1]] for b, n in items], dtype=np.int64).reshape(-1, 2)

        node_maps = [dict() for _ in graphs]
        for b, g in enumerate(graphs):
            node_maps[b][g.event.id] = b
        for k, (b, n) in enumerate(acts):
            node_maps[b][n.id] = B + k
        for k, (b, n) in enumerate(ents):
            node_maps[b][n.id] = B + len(acts) + k
        n_nodes = B + len(acts) + len(ents)
        roles = np.empty(n_nodes, dtype=np.int64)
        adj = np.zeros((n_nodes, n_nodes), dtype=bool)
        for b, g in enumerate(graphs):
            m = node_maps[b]
            for n in g.nodes:
                roles[m[n.id]] = ROLE_INDEX[n.role]
            for e in g.edges:
                adj[m[e.child], m[e.parent]] = adj[m[e.parent], m[e.child]] = True
        return cls(ids, lengths, spans(acts), spans(ents),
                   np.array([b for b, _ in acts], dtype=np.int64),
                   np.array([b for b, _ in ents], dtype=np.int64),
                   roles, adj, node_maps)


@dataclass
class TextEmbeddings:
    event: Tensor       # (B, D)   c_e per caption
    actions: Tensor     # (Na, D)  c_a rows, owners in action_owner
    entities: Tensor    # (No, D)
    action_owner: np.ndarray
    entity_owner: np.ndarray
    layers: list        # node states g^0 .. g^L, each (n, D)
    attention: list     # beta per layer, each (n, n)
    word_attention: Tensor  # alpha_e, (B, T)

    def caption(self, i):
        """Per-caption numpy views: c_e (D,), c_a (N_a, D), c_o (N_o, D)."""
        return (self.event.data[i], self.actions.data[self.action_owner == i],
                self.entities.data[self.entity_owner == i])


# -- forward pieces -------------------------------------------------------------------

def contextual_words(p, batch):
    """w_i = (forward_i + backward_i) / 2 from two independent LSTMs. Returns (B, T, H)."""
    B, T = batch.ids.shape
    emb = p["text.embed.W_c"]
    x = ops.take(emb, batch.ids.reshape(-1)).reshape(B, T, emb.shape[1])
    fwd = lstm_sequence(x, batch.lengths, p["text.lstm_fwd.W_ih"], p["text.lstm_fwd.W_hh"], p["text.lstm_fwd.b"])
    bwd = lstm_sequence(x, batch.lengths, p["text.lstm_bwd.W_ih"], p["text.lstm_bwd.W_hh"], p["text.lstm_bwd.b"],
                        reverse=True)
    return (fwd + bwd) * 0.5


def attention_pool(seq, score_w, lengths):
    """Softmax-weighted sum over positions. seq (B, T, H), score_w (1, H) -> ((B, H), weights (B, T))."""
    B, T, H = seq.shape
    scores = ops.linear(seq.reshape(B * T, H), score_w).reshape(B, T)
    mask = np.arange(T)[None, :] < np.asarray(lengths)[:, None]
    alpha = ops.softmax(scores, axis=1, mask=mask)
    pooled = ops.sum(seq * alpha.reshape(B, T, 1), axis=1)
    return pooled, alpha


def event_pool(p, words, lengths):
    return attention_pool(words, p["text.event_attn.W_e"], lengths)


def node_pool(words, batch):
    """Elementwise max over each node's span of contextual word vectors."""
    B, T, H = words.shape
    flat = words.reshape(B * T, H)
    ga = ops.segment_max(flat, batch.action_spans[:, 0], batch.action_spans[:, 1])
    go = ops.segment_max(flat, batch.entity_spans[:, 0], batch.entity_spans[:, 1]) if len(batch.entity_spans) else None
    return ga, go


def role_init(p, g, roles):
    """g_i * (W_r onehot(role_i)): per-dimension scaling by the node's role column."""
    scale = ops.take(ops.transpose(p["text.role.W_r"]), roles)
    return g * scale


def graph_attention_layer(p, g, adjacency, layer, uniform=False):
    """g^{l+1} = g^l + W_t^{l+1} sum_j beta_ij g_j^l with beta a softmax over neighbours.

    Nodes without neighbours keep their state. ``uniform`` replaces the
    learned attention by a plain average over neighbours.
    """
    D = g.shape[1]
    if uniform:
        scores = Tensor(np.zeros(adjacency.shape, dtype=g.dtype))
    else:
        q = ops.linear(g, p["text.gcn.W_q"])
        k = ops.linear(g, p["text.gcn.W_k"])
        scores = ops.matmul(q, ops.transpose(k)) * (1.0 / math.sqrt(D))
    beta = ops.softmax(scores, axis=1, mask=adjacency)
    context = ops.matmul(beta, g)
    return g + ops.linear(context, p[f"text.gcn.W_t{layer}"]), beta


def edge_specific_layer(p, g, adjacency, roles, layer=1):
    """First graph layer written with one transformation matrix per edge.

    g holds the pooled node vectors *before* role scaling. The message from
    j to i uses ``W_t * w_r[role_j]`` (columns of W_t scaled by the sender's
    role vector) applied to the raw g_j; the attention weights are those of
    the role-scaled states. Plain numpy, one edge at a time: a reference for
    the factorised path, not a training op.
    """
    W_t = np.asarray(p[f"text.gcn.W_t{layer}"].data, dtype=np.float64)
    W_r = np.asarray(p["text.role.W_r"].data, dtype=np.float64)
    W_q = np.asarray(p["text.gcn.W_q"].data, dtype=np.float64)
    W_k = np.asarray(p["text.gcn.W_k"].data, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    g0 = g * W_r[:, roles].T
    n, D = g.shape
    out = g0.copy()
    for i in range(n):
        nbrs = np.flatnonzero(adjacency[i])
        if nbrs.size == 0:
            continue
        scores = np.array([(W_q @ g0[i]) @ (W_k @ g0[j]) / math.sqrt(D) for j in nbrs])
        beta = np.exp(scores - scores.max())
        beta /= beta.sum()
        for b, j in zip(beta, nbrs):
            W_ij = W_t * W_r[:, roles[j]][None, :]
            out[i] += b * (W_ij @ g[j])
    return out


def encode_text(p, cfg, batch):
    words = contextual_words(p, batch)
    ge, alpha = event_pool(p, words, batch.lengths)
    ga, go = node_pool(words, batch)
    g = ops.concat([ge, ga] + ([go] if go is not None else []), axis=0)
    if "text.lift.W" in p:
        g = ops.linear(g, p["text.lift.W"])
    if not cfg.no_role_awareness:
        g = role_init(p, g, batch.roles)
    layers, attn = [g], []
    for layer in range(1, cfg.num_layers + 1):
        g, beta = graph_attention_layer(p, g, batch.adjacency, layer, uniform=cfg.no_graph_attention)
        layers.append(g)
        attn.append(beta)
    B, Na = batch.size, len(batch.action_owner)
    D = g.shape[1]
    entities = g[B + Na:] if len(batch.entity_owner) else Tensor(np.zeros((0, D), dtype=g.dtype))
    return TextEmbeddings(g[:B], g[B:B + Na], entities, batch.action_owner, batch.entity_owner,
                          layers, attn, alpha)
