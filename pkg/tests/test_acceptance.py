"""End-to-end acceptance checks, one test per criterion.

Every test records a PASS/FAIL line (even when it errors); the lines are
printed in the terminal summary by ``conftest.pytest_terminal_summary``.
"""

import functools
import json
import time

import numpy as np
import pytest

from hgr.autodiff import ParameterStore, Tensor, precision
from hgr.cli import main
from hgr.config import ExperimentConfig
from hgr.experiments import desk_gradcheck, run_binary_benchmark, split_triple
from hgr.graph import graph_from_dict, graph_to_dict
from hgr.matching import contrastive_loss
from hgr.metrics import compute_metrics, per_level_reports, rank_gallery, retrieval_reports
from hgr.model import HGRModel, ModelConfig
from hgr.synthetic import generate_world
from hgr.text import (TextEncoderConfig, Vocabulary, edge_specific_layer, graph_attention_layer, init_text_params,
                      naive_relational_param_count, relational_param_count, role_init)
from hgr.train import TrainConfig, load_checkpoint, save_checkpoint, train
from hgr.video import read_features, write_features

RESULTS = []


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                RESULTS.append(f"[{number:>2}] FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0][:160]}")
                raise
            RESULTS.append(f"[{number:>2}] PASS  {title}" + (f": {detail}" if detail else ""))
        return run
    return wrap


# -- 1 ------------------------------------------------------------------------------

@criterion(1, "full-loss gradient check")
def test_gradient_check_of_full_loss():
    res = desk_gradcheck(dim=16, hidden=16, word_dim=8, batch=2)
    assert res.max_error <= 1e-4, res.per_parameter
    assert res.seconds < 60
    return f"max rel err {res.max_error:.2e} over {res.entries} entries in {res.seconds:.1f}s"


# -- 2 ------------------------------------------------------------------------------

@criterion(2, "factorised layer equals edge-specific form")
def test_factorised_layer_equals_edge_specific_form():
    rng = np.random.default_rng(0)
    worst = 0.0
    for k in range(50):
        p = ParameterStore(k, dtype=np.float64)
        init_text_params(p, TextEncoderConfig(20, 6, 8, 8, 2))
        n = int(rng.integers(2, 12))
        adj = rng.random((n, n)) < 0.4
        adj = adj | adj.T
        np.fill_diagonal(adj, False)
        g, roles = rng.standard_normal((n, 8)), rng.integers(0, 13, size=n)
        with precision("extended"):
            fact, _ = graph_attention_layer(p, role_init(p, Tensor(g), roles), adj, 1)
        worst = max(worst, float(np.abs(fact.data - edge_specific_layer(p, g, adj, roles)).max()))
    assert worst <= 1e-12
    return f"max abs diff {worst:.1e} over 50 graphs"


# -- 3 ------------------------------------------------------------------------------

@criterion(3, "relational parameter count")
def test_relational_parameter_count():
    cfg = TextEncoderConfig(vocab_size=50, word_dim=32, lstm_hidden=64, joint_dim=64, num_layers=2)
    p = ParameterStore(0)
    init_text_params(p, cfg)
    got = relational_param_count(p, cfg)
    assert got == 2 * 64 * 64 + 13 * 64 == 9024
    assert naive_relational_param_count(2, 13, 64) == 2 * 13 * 64 * 64 == 106496
    return f"{got} factorised vs {naive_relational_param_count(2, 13, 64)} naive"


# -- 4 ------------------------------------------------------------------------------

def double_loop_loss(s, margin):
    b = len(s)
    total = 0.0
    for i in range(b):
        worst_video = max((max(0.0, margin - s[i][i] + s[j][i]) for j in range(b) if j != i), default=0.0)
        worst_text = max((max(0.0, margin - s[i][i] + s[i][j]) for j in range(b) if j != i), default=0.0)
        total += worst_video + worst_text
    return total / b


@criterion(4, "loss matches exhaustive double loop")
def test_loss_matches_double_loop():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        b = int(rng.integers(1, 17))
        s = rng.uniform(-1, 1, (b, b))
        margin = float(rng.uniform(0, 0.5))
        worst = max(worst, abs(contrastive_loss(Tensor(s), margin).item() - double_loop_loss(s.tolist(), margin)))
    assert worst <= 1e-12
    assert contrastive_loss(Tensor(np.array([[0.9, 0.1], [0.2, 0.8]]))).item() == 0.0
    assert contrastive_loss(Tensor(np.array([[0.5, 0.6], [0.4, 0.5]]))).item() == pytest.approx(0.4, abs=1e-15)
    return f"max abs diff {worst:.1e} over 100 matrices"


# -- 5 ------------------------------------------------------------------------------

def brute_metrics(sims, caption_video):
    ranks = []
    for j in range(sims.shape[1]):
        order = sorted(range(sims.shape[0]), key=lambda i: (-sims[i, j], i))
        ranks.append(order.index(caption_video[j]) + 1)
    ranks = sorted(ranks)
    n = len(ranks)
    med = ranks[n // 2] if n % 2 else (ranks[n // 2 - 1] + ranks[n // 2]) / 2
    return [100 * sum(r <= k for r in ranks) / n for k in (1, 5, 10)] + [med, sum(ranks) / n]


@criterion(5, "metrics match a brute-force sorter")
def test_metrics_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        nv = int(rng.integers(1, 20))
        cv = rng.integers(0, nv, size=int(rng.integers(1, 40)))
        sims = np.round(rng.uniform(-1, 1, (nv, len(cv))), 1)  # coarse grid forces ties
        t2v, _ = retrieval_reports(sims, cv)
        assert [t2v.r1, t2v.r5, t2v.r10, t2v.medr, t2v.mnr] == brute_metrics(sims, cv)
    ranks = rank_gallery(np.array([[0.9, 0.1, 0.5]]), [[1]])
    assert ranks.tolist() == [3]
    r = compute_metrics([1, 3, 7])
    assert r.medr == 3 and r.mnr == 11 / 3
    return "100 galleries exact; [1,3,7] -> MedR 3, MnR 11/3"


# -- 6 ------------------------------------------------------------------------------

@pytest.mark.slow
@criterion(6, "overfit the 16-video world")
def test_overfit_sixteen_videos():
    world = generate_world(seed=0, n_videos=16, split=(16, 0, 0))
    ds = world.dataset
    model = HGRModel(ModelConfig.desk(len(ds.vocab), feature_dim=ds.feature_dim, joint_dim=64, lam=4.0),
                     ds.vocab, seed=0)
    tr = split_triple(ds, "train")
    t0 = time.perf_counter()
    res = train(model, TrainConfig(batch_size=8, epochs=200, joint_dim=64, lam=4.0, margin=0.2), tr,
                select_on_train=True)
    seconds = time.perf_counter() - t0
    hit = next((h["epoch"] for h in res.history
                if h["val"]["text_to_video"]["r1"] == 100 and h["val"]["video_to_text"]["r1"] == 100), None)
    assert hit is not None, res.history[-1]["val"]
    assert seconds < 600
    return f"train R@1 = 100% both directions at epoch {hit} ({seconds:.0f}s for 200 epochs)"


# -- 7 and 8 share the desk training recipe ------------------------------------------

def train_desk(world, **ablation):
    ds = world.dataset
    model = HGRModel(ModelConfig.desk(len(ds.vocab), feature_dim=ds.feature_dim, **ablation), ds.vocab, seed=0)
    res = train(model, TrainConfig(batch_size=32, epochs=50, joint_dim=64, **ablation),
                split_triple(ds, "train"), split_triple(ds, "val"))
    model.params.load_state(res.best_params.state())
    return model


@pytest.mark.slow
@criterion(7, "fusion beats every single level")
def test_fusion_beats_single_levels():
    world = generate_world(seed=0, n_videos=448, split=(320, 64, 64))
    model = train_desk(world)
    videos, graphs, cv = split_triple(world.dataset, "test")
    rows = per_level_reports(model.score_matrix(videos, graphs), cv)
    rsum = {lvl: t2v.rsum + v2t.rsum for lvl, (t2v, v2t) in rows.items()}
    assert rsum["fusion"] >= max(rsum["event"], rsum["action"], rsum["entity"]), rsum
    return ", ".join(f"{k} {v:.1f}" for k, v in rsum.items())


@pytest.fixture(scope="module")
def role_world():
    return generate_world(seed=0, n_videos=640, split=(320, 64, 256))


@pytest.mark.slow
@criterion(8, "role sensitivity on the binary benchmark")
def test_role_sensitivity(role_world):
    full, *_ = run_binary_benchmark(train_desk(role_world), role_world, seed=0)
    abl, *_ = run_binary_benchmark(train_desk(role_world, no_role_awareness=True), role_world, seed=0)
    assert full.counts["switch_roles"] == abl.counts["switch_roles"] > 0
    sw, sw_abl = full.accuracy["switch_roles"], abl.accuracy["switch_roles"]
    inc = full.accuracy["incomplete_events"]
    assert sw >= 70 and sw_abl < sw and inc > 50, (sw, sw_abl, inc)
    return (f"switch roles {sw:.1f}% vs {sw_abl:.1f}% without roles on {full.counts['switch_roles']} triplets; "
            f"incomplete events {inc:.1f}%")


# -- 9 ------------------------------------------------------------------------------

@criterion(9, "training is bit-for-bit deterministic")
def test_training_determinism(tmp_path):
    cfg = {"world": {"n_videos": 32, "split": [16, 8, 8]}, "train": {"batch_size": 8, "epochs": 3, "joint_dim": 32}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    data = tmp_path / "data"
    assert main(["gen-data", "--config", str(tmp_path / "c.json"), "--out", str(data)]) == 0
    for run in ("a", "b"):
        assert main(["train", "--config", str(tmp_path / "c.json"), "--seed", "0", "--data", str(data),
                     "--out", str(tmp_path / run)]) == 0
    names = ("log.jsonl", "best.bin", "best.meta.json", "best.vocab.json")
    differ = [n for n in names if (tmp_path / "a" / n).read_bytes() != (tmp_path / "b" / n).read_bytes()]
    assert not differ, differ
    return "logs and checkpoints identical"


# -- 10 -----------------------------------------------------------------------------

@criterion(10, "formats survive write-read-write byte-identically")
def test_format_round_trips(tmp_path, parse):
    write_features(tmp_path / "a.hgrf", np.random.default_rng(0).standard_normal((5, 7)).astype(np.float32))
    write_features(tmp_path / "b.hgrf", read_features(tmp_path / "a.hgrf"))
    assert (tmp_path / "a.hgrf").read_bytes() == (tmp_path / "b.hgrf").read_bytes()

    g = parse("a man cuts an onion in a kitchen and then washes a cup into a bowl")
    first = json.dumps(graph_to_dict(g), sort_keys=True)
    assert json.dumps(graph_to_dict(graph_from_dict(json.loads(first))), sort_keys=True) == first

    vocab = Vocabulary.build([parse("a woman is cutting an onion").tokens])
    model = HGRModel(ModelConfig.desk(len(vocab), feature_dim=16, joint_dim=16), vocab, seed=0)
    save_checkpoint(tmp_path / "ck1", model, 3, {"rsum": 1.0})
    back, meta = load_checkpoint(tmp_path / "ck1")
    save_checkpoint(tmp_path / "ck2", back, meta["epoch"], meta["report"])
    for suffix in (".bin", ".meta.json", ".vocab.json"):
        assert (tmp_path / f"ck1{suffix}").read_bytes() == (tmp_path / f"ck2{suffix}").read_bytes(), suffix

    exp = ExperimentConfig()
    exp.save(tmp_path / "c1.json")
    ExperimentConfig.load(tmp_path / "c1.json").save(tmp_path / "c2.json")
    assert (tmp_path / "c1.json").read_bytes() == (tmp_path / "c2.json").read_bytes()
    return "HGRF, graph JSON, checkpoint and config"
