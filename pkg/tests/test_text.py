import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgr.autodiff import ParameterStore, Tensor, grad_check, ops, precision
from hgr.graph import ROLE_INDEX, SemanticRoleGraph, Node, Edge, SrlFrame, build_graph
from hgr.text import (NaiveRelationalLayer, TextBatch, TextEncoderConfig, Vocabulary, contextual_words,
                      edge_specific_layer, encode_text, event_pool, graph_attention_layer, init_text_params,
                      naive_relational_param_count, node_pool, relational_param_count, role_init)


def text_store(vocab_size=20, word_dim=6, hidden=8, dim=8, layers=2, seed=0, dtype=np.float64):
    cfg = TextEncoderConfig(vocab_size, word_dim, hidden, dim, layers)
    p = ParameterStore(seed, dtype=dtype)
    init_text_params(p, cfg)
    return p, cfg


def random_graph(rng, dim):
    """Node states, symmetric neighbourhoods without self loops, and a role per node."""
    n = int(rng.integers(2, 10))
    adj = rng.random((n, n)) < 0.4
    adj = adj | adj.T
    np.fill_diagonal(adj, False)
    return rng.standard_normal((n, dim)), adj, rng.integers(0, 13, size=n)


# -- pooling ----------------------------------------------------------------------

def test_event_pool_weights_follow_softmax_of_scores():
    p = {"text.event_attn.W_e": Tensor(np.array([[1.0]]))}
    words = Tensor(np.array([[[0.0], [math.log(3)]]]))
    g, alpha = event_pool(p, words, np.array([2]))
    np.testing.assert_allclose(alpha.data, [[0.25, 0.75]], atol=1e-15)
    np.testing.assert_allclose(g.data, [[0.75 * math.log(3)]], atol=1e-15)


def test_event_pool_single_word_and_identical_words():
    p = {"text.event_attn.W_e": Tensor(np.array([[0.3, -0.2]]))}
    g, alpha = event_pool(p, Tensor(np.array([[[1.0, 2.0]]])), np.array([1]))
    np.testing.assert_array_equal(alpha.data, [[1.0]])
    np.testing.assert_allclose(g.data, [[1.0, 2.0]])
    g, alpha = event_pool(p, Tensor(np.tile([[[1.0, 2.0]]], (1, 4, 1))), np.array([4]))
    np.testing.assert_allclose(alpha.data, 0.25)


def test_node_pool_is_elementwise_max_over_the_span():
    words = Tensor(np.array([[[1.0, 2.0], [2.0, 1.0], [5.0, 5.0]]]))
    batch = SimpleNamespace(action_spans=np.array([[0, 2]]), entity_spans=np.array([[2, 3], [2, 3]]))
    ga, go = node_pool(words, batch)
    np.testing.assert_array_equal(ga.data, [[2.0, 2.0]])
    np.testing.assert_array_equal(go.data[0], go.data[1])
    np.testing.assert_array_equal(go.data[0], [5.0, 5.0])


# -- role scaling and graph attention --------------------------------------------------

def test_role_init_identity_zero_and_discrimination():
    p, _ = text_store()
    W_r = p["text.role.W_r"].data
    g = Tensor(np.arange(1.0, 9.0)[None, :].repeat(2, axis=0))
    a0, a1 = ROLE_INDEX["ARG0"], ROLE_INDEX["ARG1"]
    W_r[:, a0] = 1.0
    np.testing.assert_array_equal(role_init(p, g, np.array([a0, a0])).data, g.data)
    W_r[:, a0] = 0.0
    np.testing.assert_array_equal(role_init(p, g, np.array([a0, a0])).data, 0)
    W_r[:, a0] = np.linspace(0.5, 1.5, 8)
    out = role_init(p, g, np.array([a0, a1])).data
    assert not np.allclose(out[0], out[1])


def test_single_neighbour_gets_all_attention_and_isolated_nodes_keep_state():
    p, _ = text_store()
    g = Tensor(np.random.default_rng(0).standard_normal((3, 8)))
    adj = np.zeros((3, 3), dtype=bool)
    adj[0, 1] = adj[1, 0] = True
    out, beta = graph_attention_layer(p, g, adj, 1)
    assert beta.data[0, 1] == 1.0 and beta.data[1, 0] == 1.0
    np.testing.assert_array_equal(out.data[2], g.data[2])
    np.testing.assert_allclose(out.data[0], g.data[0] + p["text.gcn.W_t1"].data @ g.data[1])


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_attention_rows_are_distributions(seed):
    rng = np.random.default_rng(seed)
    p, _ = text_store(seed=seed % 1000)
    g, adj, _ = random_graph(rng, 8)
    _, beta = graph_attention_layer(p, Tensor(g), adj, 1)
    b = beta.data
    assert np.all(b >= 0) and np.all(b[~adj] == 0)
    has = adj.any(axis=1)
    np.testing.assert_allclose(b[has].sum(axis=1), 1.0, atol=1e-12)


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_factorised_layer_equals_edge_specific_form(seed):
    rng = np.random.default_rng(seed)
    with precision("extended"):
        p, _ = text_store(seed=seed % 1000)
        g, adj, roles = random_graph(rng, 8)
        fact, _ = graph_attention_layer(p, role_init(p, Tensor(g), roles), adj, 1)
    np.testing.assert_allclose(fact.data, edge_specific_layer(p, g, adj, roles), rtol=0, atol=1e-12)


def test_uniform_ablation_differs_from_learned_attention():
    p, _ = text_store()
    rng = np.random.default_rng(1)
    g, adj, _ = random_graph(rng, 8)
    adj[0, 1:4] = adj[1:4, 0] = True
    a, ba = graph_attention_layer(p, Tensor(g), adj, 1)
    u, bu = graph_attention_layer(p, Tensor(g), adj, 1, uniform=True)
    assert not np.allclose(a.data, u.data)
    rows = adj.any(axis=1)
    np.testing.assert_allclose(bu.data[rows], adj[rows] / adj[rows].sum(axis=1, keepdims=True))


# -- parameter counting --------------------------------------------------------------

def test_relational_parameter_count_is_factorised():
    p, cfg = text_store(dim=64, hidden=64, layers=2)
    assert relational_param_count(p, cfg) == 2 * 64 * 64 + 13 * 64 == 9024
    assert naive_relational_param_count(2, 13, 64) == 2 * 13 * 64 * 64 == 106496
    naive = NaiveRelationalLayer(ParameterStore(0), 2, 13, 8)
    assert naive.count() == 2 * 13 * 8 * 8


# -- contextual words -----------------------------------------------------------------

def _batch(ids):
    ids = np.asarray(ids)
    return SimpleNamespace(ids=ids, lengths=np.full(ids.shape[0], ids.shape[1]))


def test_single_token_word_is_mean_of_directions():
    p, _ = text_store()
    w = contextual_words(p, _batch([[3]]))
    assert w.shape == (1, 1, 8)
    x = p["text.embed.W_c"].data[3:4]
    hs = []
    for d in ("fwd", "bwd"):
        h, _ = ops.lstm_cell(Tensor(x), Tensor(np.zeros((1, 8))), Tensor(np.zeros((1, 8))),
                             p[f"text.lstm_{d}.W_ih"], p[f"text.lstm_{d}.W_hh"], p[f"text.lstm_{d}.b"])
        hs.append(h.data)
    np.testing.assert_allclose(w.data[0], (hs[0] + hs[1]) / 2, atol=1e-12)


def test_zero_lstm_parameters_give_zero_words():
    p, _ = text_store()
    for name, t in p.items():
        if "lstm" in name:
            t.data[:] = 0
    assert not np.any(contextual_words(p, _batch([[2, 3, 4]])).data)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 7))
@settings(max_examples=25, deadline=None)
def test_reversed_tokens_with_swapped_directions_reverse_the_words(seed, n):
    p, _ = text_store(seed=seed)
    ids = np.random.default_rng(seed).integers(2, 20, size=(1, n))
    w = contextual_words(p, _batch(ids)).data
    q = p.copy()
    for part in ("W_ih", "W_hh", "b"):
        q[f"text.lstm_fwd.{part}"].data, q[f"text.lstm_bwd.{part}"].data = (
            p[f"text.lstm_bwd.{part}"].data.copy(), p[f"text.lstm_fwd.{part}"].data.copy())
    wr = contextual_words(q, _batch(ids[:, ::-1].copy())).data
    np.testing.assert_allclose(wr[0, ::-1], w[0], atol=1e-12)


# -- the whole encoder ------------------------------------------------------------------

def _three_by_four():
    toks = "w0 v1 w2 v3 w4 v5 w6".split()
    frames = [SrlFrame(1, [((0, 1), "ARG0"), ((2, 3), "ARG1")]), SrlFrame(3, [((4, 5), "ARG1")]),
              SrlFrame(5, [((6, 7), "ARGM-LOC")])]
    return build_graph(toks, frames)


def test_encoder_output_shapes():
    g = _three_by_four()
    vocab = Vocabulary.build([g.tokens])
    p, cfg = text_store(vocab_size=len(vocab), hidden=6)
    emb = encode_text(p, cfg, TextBatch.from_graphs([g], vocab))
    assert emb.event.shape == (1, 8)
    c_e, c_a, c_o = emb.caption(0)
    assert c_a.shape == (3, 8) and c_o.shape == (4, 8)
    np.testing.assert_allclose(emb.word_attention.data.sum(axis=1), 1.0, atol=1e-12)


def _relabel(g, perm_actions, perm_entities):
    """Same graph with the action and entity node lists reordered and ids reassigned."""
    ev = g.event
    acts = [g.actions[i] for i in perm_actions]
    ents = [g.entities[i] for i in perm_entities]
    new_id = {ev.id: 0}
    for k, n in enumerate(acts + ents, start=1):
        new_id[n.id] = k
    nodes = [Node(new_id[n.id], n.level, n.span, n.role) for n in [ev] + acts + ents]
    edges = [Edge(new_id[e.child], new_id[e.parent], e.role) for e in reversed(g.edges)]
    return SemanticRoleGraph(g.tokens, nodes, edges).validate()


@given(seed=st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_node_relabelling_permutes_outputs(seed):
    g = _three_by_four()
    rng = np.random.default_rng(seed)
    pa, po = rng.permutation(3), rng.permutation(4)
    h = _relabel(g, pa, po)
    vocab = Vocabulary.build([g.tokens])
    p, cfg = text_store(vocab_size=len(vocab), seed=seed % 100)
    a = encode_text(p, cfg, TextBatch.from_graphs([g], vocab)).caption(0)
    b = encode_text(p, cfg, TextBatch.from_graphs([h], vocab)).caption(0)
    np.testing.assert_allclose(b[0], a[0], atol=1e-12)
    np.testing.assert_allclose(b[1], a[1][pa], atol=1e-12)
    np.testing.assert_allclose(b[2], a[2][po], atol=1e-12)


def test_text_encoder_gradients():
    g = _three_by_four()
    vocab = Vocabulary.build([g.tokens])
    p, cfg = text_store(vocab_size=len(vocab), hidden=6)
    batch = TextBatch.from_graphs([g, g], vocab)
    target = np.random.default_rng(0).standard_normal((1 + 1 + 3 + 3 + 4 + 4, 8))

    def f(q):
        e = encode_text(q, cfg, batch)
        allnodes = ops.concat([e.event, e.actions, e.entities], axis=0)
        return ops.sum(ops.tanh(allnodes) * Tensor(target.astype(allnodes.dtype)))

    assert grad_check(f, p, max_entries=6) <= 1e-4


def test_vocabulary_reserves_pad_and_oov(tmp_path):
    v = Vocabulary.build([["b", "a"], ["a"]])
    assert v.encode(["a", "zzz"]) == [2, 1]
    v.save(tmp_path / "v.json")
    assert Vocabulary.load(tmp_path / "v.json").index == v.index
    (tmp_path / "bad.json").write_text('{"a": 0}')
    with pytest.raises(ValueError):
        Vocabulary.load(tmp_path / "bad.json")
