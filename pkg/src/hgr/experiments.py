"""Reusable experiment drivers shared by the CLI and the acceptance suite."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .autodiff.gradcheck import grad_check_details
from .autodiff.tensor import no_grad
from .grammar import SyntheticGrammar
from .graph import ParseError, build_graph, rule_parse, tokenize
from .metrics import per_level_reports, score_binary
from .model import LEVELS, HGRModel, ModelConfig
from .synthetic import build_binary_benchmark
from .text import Vocabulary
from .train import TrainConfig, train
from .video import VideoFeatures

GRADCHECK_SENTENCES = (
    "a woman is cutting an onion",
    "a man strums a violin on a stage",
    "men are dancing in towels",
    "a man cuts an onion in a kitchen and then washes a cup into a bowl",
)


@dataclass
class GradCheckResult:
    max_error: float
    per_parameter: dict
    entries: int
    seconds: float


def desk_gradcheck(seed=0, dim=16, hidden=16, word_dim=8, feature_dim=16, frames=4, batch=2, step=1e-5,
                   max_entries=None, **model_kw):
    """Finite-difference check of the whole loss on a small video x caption batch."""
    grammar = SyntheticGrammar.default()
    graphs = [build_graph(*rule_parse(s, grammar)) for s in GRADCHECK_SENTENCES]
    vocab = Vocabulary.build([g.tokens for g in graphs])
    cfg = ModelConfig.desk(len(vocab), feature_dim=feature_dim, word_dim=word_dim, lstm_hidden=hidden,
                           joint_dim=dim, **model_kw)
    model = HGRModel(cfg, vocab, seed=seed)
    rng = np.random.default_rng(seed)
    videos = [VideoFeatures(f"g{i}", rng.standard_normal((frames, feature_dim))) for i in range(batch)]
    captions = graphs[:batch]
    t0 = time.perf_counter()
    details = grad_check_details(
        lambda p: model.loss(model.video_batch(videos), model.text_batch(captions), params=p),
        model.params, step=step, max_entries=max_entries, seed=seed)
    n = sum(t.data.size if max_entries is None else min(t.data.size, max_entries) for _, t in model.params.items())
    return GradCheckResult(max(details.values()), details, n, time.perf_counter() - t0)


def model_config_for(exp, vocab_size, feature_dim):
    tc = exp.train
    return ModelConfig(vocab_size=vocab_size, feature_dim=feature_dim, word_dim=exp.model.word_dim,
                       lstm_hidden=exp.model.lstm_hidden, joint_dim=tc.joint_dim, num_layers=tc.num_layers,
                       lam=tc.lam, normalize_local=tc.normalize_local, max_frames=exp.model.max_frames,
                       no_graph_attention=tc.no_graph_attention, no_role_awareness=tc.no_role_awareness,
                       no_hierarchical_video=tc.no_hierarchical_video)


def split_triple(dataset, name):
    videos, caps, cv = dataset.split(name)
    return videos, [c.graph for c in caps], cv


def train_experiment(exp, dataset, log_path=None, timing_path=None, model_seed=None):
    """Build a model from ``exp`` and train it on ``dataset``; the best parameters are loaded back."""
    cfg = model_config_for(exp, len(dataset.vocab), dataset.feature_dim)
    model = HGRModel(cfg, dataset.vocab, seed=exp.train.seed if model_seed is None else model_seed)
    tr = split_triple(dataset, "train")
    val = split_triple(dataset, "val") if dataset.splits.get("val") else None
    result = train(model, exp.train, tr, val, log_path=log_path, timing_path=timing_path,
                   select_on_train=val is None)
    model.params.load_state(result.best_params.state())
    return model, result


def level_reports(model, dataset, split):
    videos, graphs, cv = split_triple(dataset, split)
    return per_level_reports(model.score_matrix(videos, graphs), cv)


def pair_scores(model, video, graphs):
    """Per-level scores of one video against several caption graphs, as numpy rows."""
    with no_grad():
        sims = model.similarity(model.video_batch([video]), model.text_batch(graphs))
        return {lvl: sims.level(lvl).data[0].astype(float) for lvl in LEVELS}


def binary_select(model, video, positive_graph, negative_graph):
    """(picked positive?, fused margin). An exact tie counts as a wrong pick."""
    fused = pair_scores(model, video, [positive_graph, negative_graph])["fusion"]
    margin = float(fused[0] - fused[1])
    return margin > 0, margin


def run_binary_benchmark(model, world, seed=0, split="test"):
    triplets, skipped = build_binary_benchmark(world, seed=seed, split=split)
    videos = world.dataset.videos
    pos, neg = [], []
    for t in triplets:
        fused = pair_scores(model, videos[t.video_id], [t.positive_graph, t.negative_graph])["fusion"]
        pos.append(fused[0])
        neg.append(fused[1])
    return score_binary(pos, neg, [t.kind for t in triplets]), triplets, np.asarray(pos), np.asarray(neg)


def query_graph(sentence, grammar=None):
    """Parse an ad-hoc query; words outside the grammar fall back to a frameless graph."""
    grammar = grammar or SyntheticGrammar.default()
    try:
        return build_graph(*rule_parse(sentence, grammar))
    except ParseError:
        toks = tokenize(sentence)
        if not toks:
            raise
        return build_graph(toks, [])


def retrieve(model, videos, graph, topk=5):
    """Top-k videos for one caption graph with per-level scores."""
    mats = model.score_matrix(videos, [graph])
    fused = mats["fusion"][:, 0]
    order = sorted(range(len(videos)), key=lambda i: (-fused[i], i))[:topk]
    return [{"rank": r + 1, "video_id": videos[i].video_id,
             **{lvl: float(mats[lvl][i, 0]) for lvl in LEVELS}} for r, i in enumerate(order)]


def default_train_config(**kw):
    base = dict(batch_size=32, epochs=50, joint_dim=64)
    base.update(kw)
    return TrainConfig(**base)


class FeatureWidthMismatch(ValueError):
    pass


def cross_dataset_eval(model, dataset, split="test"):
    """Zero-shot (t2v, v2t) reports on a foreign dataset; unknown words map to OOV."""
    if dataset.feature_dim != model.cfg.feature_dim:
        raise FeatureWidthMismatch(f"dataset features are {dataset.feature_dim}-d, "
                                   f"the checkpoint expects {model.cfg.feature_dim}-d")
    name = split if dataset.splits.get(split) else "all"
    return level_reports(model, dataset, name)["fusion"]
