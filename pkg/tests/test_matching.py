import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hgr.autodiff import Tensor, grad_check, no_grad, precision
from hgr.matching import (contrastive_loss, contrastive_loss_reference, fuse, global_score,
                          local_attentive_score)


def frames_with_cosines(node, cosines):
    """Frame vectors whose cosine with ``node`` (a unit vector along axis 0) are ``cosines``."""
    return np.array([[c, np.sqrt(1 - c * c), 0.0] for c in cosines])


def test_global_score_cases():
    v = Tensor(np.array([1.0, 2.0, 3.0]))
    assert global_score(v, v).item() == pytest.approx(1.0, abs=1e-8)
    assert global_score(v, v * -1.0).item() == pytest.approx(-1.0, abs=1e-8)
    assert global_score(Tensor(np.array([1.0, 0.0])), Tensor(np.array([0.0, 1.0]))).item() == 0.0


def test_local_score_worked_example():
    node = np.array([[1.0, 0.0, 0.0]])
    s, sij, phi = local_attentive_score(Tensor(node), Tensor(frames_with_cosines(node, [0.6, 0.8])), lam=4.0)
    np.testing.assert_allclose(sij, [[0.6, 0.8]], atol=1e-12)
    e = np.exp([2.4, 3.2])
    want_phi = e / e.sum()
    np.testing.assert_allclose(phi, [want_phi], atol=1e-8)
    np.testing.assert_allclose(want_phi, [0.3100, 0.6900], atol=5e-5)
    # the epsilon guards move the value by ~1e-8
    assert s.item() == pytest.approx(want_phi @ [0.6, 0.8], abs=1e-7)
    assert s.item() == pytest.approx(0.7380, abs=5e-5)


def test_single_frame_means_unit_attention():
    nodes = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    frame = np.array([[0.6, 0.8, 0.0]])
    s, sij, phi = local_attentive_score(Tensor(nodes), Tensor(frame), lam=4.0)
    np.testing.assert_array_equal(phi, [[1.0], [1.0]])
    assert s.item() == pytest.approx(sij.sum(), abs=1e-12)


def test_all_negative_similarities_give_uniform_attention():
    node = np.array([[1.0, 0.0, 0.0]])
    cos = [-0.2, -0.5, -0.8]
    s, sij, phi = local_attentive_score(Tensor(node), Tensor(frames_with_cosines(node, cos)), lam=4.0)
    np.testing.assert_allclose(phi, [[1 / 3] * 3], atol=1e-12)
    assert s.item() == pytest.approx(np.mean(cos), abs=1e-8)


def test_mean_normalisation_divides_by_node_count():
    rng = np.random.default_rng(0)
    nodes, frames = rng.standard_normal((3, 4)), rng.standard_normal((5, 4))
    s_sum = local_attentive_score(Tensor(nodes), Tensor(frames), 4.0)[0].item()
    s_mean = local_attentive_score(Tensor(nodes), Tensor(frames), 4.0, normalize_local="mean")[0].item()
    assert s_mean == pytest.approx(s_sum / 3, rel=1e-6)


@given(seed=st.integers(0, 10_000), lam=st.floats(0.1, 20))
@settings(max_examples=40, deadline=None)
def test_attention_over_frames_is_a_distribution(seed, lam):
    rng = np.random.default_rng(seed)
    with precision("extended"):
        _, _, phi = local_attentive_score(Tensor(rng.standard_normal((3, 4))), Tensor(rng.standard_normal((6, 4))), lam)
    assert np.all(phi >= 0)
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("scores,want", [((0.3, 0.3, 0.3), 0.3), ((1.0, 0.0, -1.0), 0.0)])
def test_fuse_is_the_mean(scores, want):
    assert fuse(*(Tensor(np.array(s)) for s in scores)).item() == pytest.approx(want, abs=1e-15)


@given(hnp.arrays(np.float64, 4, elements=st.floats(-5, 5).filter(lambda x: abs(x) > 1e-3)),
       hnp.arrays(np.float64, 4, elements=st.floats(-5, 5)), st.floats(0.01, 100))
def test_global_score_is_scale_invariant(a, b, c):
    if np.linalg.norm(b) < 1e-3:
        return
    with precision("extended"):
        s1 = global_score(Tensor(a), Tensor(b)).item()
        s2 = global_score(Tensor(a * c), Tensor(b)).item()
    # the 1e-8 norm guard perturbs each cosine by about 1e-8 / ||x||
    bound = 1e-8 / np.linalg.norm(a) + 1e-8 / np.linalg.norm(a * c) + 1e-12
    assert abs(s1 - s2) <= bound


# -- batched similarity against a pair-by-pair loop --------------------------------------

def test_batch_similarity_matches_pairwise_loop(small_model):
    model, videos, graphs = small_model
    with precision("extended"):
        p = model.params.astype(np.float64)
        with no_grad():
            full = model.similarity(model.video_batch(videos), model.text_batch(graphs), params=p)
            for i, v in enumerate(videos):
                for j, g in enumerate(graphs):
                    one = model.similarity(model.video_batch([v]), model.text_batch([g]), params=p)
                    for lvl in ("event", "action", "entity", "fusion"):
                        assert abs(full.level(lvl).data[i, j] - one.level(lvl).data[0, 0]) <= 1e-12


def test_duplicated_caption_duplicates_its_column(small_model):
    model, videos, graphs = small_model
    with no_grad():
        s = model.similarity(model.video_batch(videos), model.text_batch(graphs + graphs[1:2])).fused.data
    np.testing.assert_array_equal(s[:, -1], s[:, 1])


def test_single_pair_equals_fused_levels(small_model):
    model, videos, graphs = small_model
    with no_grad():
        s = model.similarity(model.video_batch(videos[:1]), model.text_batch(graphs[:1]))
    assert s.fused.shape == (1, 1)
    want = (s.event.data + s.action.data + s.entity.data) / 3
    np.testing.assert_allclose(s.fused.data, want, rtol=1e-6)


# -- loss ------------------------------------------------------------------------------

def test_loss_hand_cases():
    assert contrastive_loss(Tensor(np.array([[0.9, 0.1], [0.2, 0.8]]))).item() == 0.0
    assert contrastive_loss(Tensor(np.array([[0.5, 0.6], [0.4, 0.5]], dtype=np.float64))).item() == pytest.approx(0.4, abs=1e-15)


def test_zero_margin_with_dominant_diagonal_is_zero():
    sim = np.eye(4) + 0.1 * np.random.default_rng(0).random((4, 4)) * (1 - np.eye(4))
    assert contrastive_loss(Tensor(sim), margin=0.0).item() == 0.0


def test_identical_pairs_cost_twice_the_margin():
    assert contrastive_loss(Tensor(np.full((3, 3), 0.7)), margin=0.2).item() == pytest.approx(0.4, abs=1e-7)


def test_loss_requires_square_matrix():
    with pytest.raises(ValueError):
        contrastive_loss(Tensor(np.ones((2, 3))))


@given(hnp.arrays(np.float64, st.integers(1, 16).map(lambda b: (b, b)), elements=st.floats(-1, 1)),
       st.floats(0, 1))
@settings(max_examples=100)
def test_loss_matches_double_loop(sim, margin):
    got = contrastive_loss(Tensor(sim), margin).item()
    assert abs(got - contrastive_loss_reference(sim, margin)) <= 1e-12


@given(hnp.arrays(np.float64, (4, 4), elements=st.floats(-1, 1)), st.integers(0, 3), st.floats(0, 1))
def test_loss_non_increasing_in_positive_score(sim, i, bump):
    higher = sim.copy()
    higher[i, i] += bump
    assert contrastive_loss(Tensor(higher)).item() <= contrastive_loss(Tensor(sim)).item() + 1e-15


def test_full_loss_gradcheck_on_two_by_two(small_model):
    model, videos, graphs = small_model
    vb, tb = model.video_batch(videos[:2]), model.text_batch(graphs[:2])
    assert grad_check(lambda p: model.loss(vb, tb, params=p), model.params, max_entries=8) <= 1e-4
