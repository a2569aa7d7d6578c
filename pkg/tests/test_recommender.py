"""Recommender stack: full-model finite-difference gradients, prefix and
batched-suffix consistency, state construction, action sampling, and
checkpoint round trips."""

import numpy as np
import pytest

from conftest import make_chain
from pathforge import autodiff as ad
from pathforge.autodiff import Tensor
from pathforge.checkpoint import CheckpointError
from pathforge.corpus import build_grid_corpus
from pathforge.embeddings import SyntheticStore
from pathforge.env import Feedback
from pathforge.recommender import (
    GnnLearner,
    GnnPolicy,
    Recommender,
    build_state,
)
from test_autodiff import fd_max_rel_err


def small_setup(hidden=8, heads=4, attention="dot", n_docs=3):
    store = SyntheticStore(6)
    corpus = make_chain(n_docs, store)
    rec = Recommender(
        np.random.default_rng(3), embed_dim=6, hidden=hidden, heads=heads,
        attention=attention,
    )
    state = build_state(corpus, [(0, Feedback.RIGHT_LEVEL), (2, Feedback.TOO_HARD)])
    return corpus, rec, state


class TestFullStackGradients:
    @pytest.mark.parametrize("attention", ["dot", "additive"])
    def test_every_parameter_against_finite_differences(self, attention):
        corpus, rec, state = small_setup(attention=attention)
        weights = np.random.default_rng(5).standard_normal(corpus.n_docs)

        def loss():
            return ad.tsum(ad.mul(ad.log_softmax(rec.logits(state)), Tensor(weights)))

        assert fd_max_rel_err(loss, rec.parameters()) < 1e-4

    def test_batched_suffix_gradients(self):
        corpus, rec, state = small_setup()
        state2 = build_state(corpus, [(1, Feedback.TOO_EASY)])
        feedbacks = np.stack([state.feedback, state2.feedback])
        weights = np.random.default_rng(6).standard_normal((2, corpus.n_docs))

        def loss():
            trunk = rec.trunk(corpus)
            logits = rec.batched_logits(corpus, trunk, feedbacks)
            return ad.tsum(ad.mul(ad.log_softmax(logits, axis=1), Tensor(weights)))

        assert fd_max_rel_err(loss, rec.parameters()) < 1e-4


class TestForwardConsistency:
    def test_precomputed_trunk_matches_fresh_forward(self):
        corpus, rec, state = small_setup()
        with ad.no_grad():
            a = rec.logits(state).data
            b = rec.logits(state, rec.trunk(corpus)).data
        np.testing.assert_array_equal(a, b)

    def test_batched_equals_per_state(self):
        corpus, rec, _ = small_setup()
        states = [
            build_state(corpus, []),
            build_state(corpus, [(0, Feedback.RIGHT_LEVEL)]),
            build_state(corpus, [(0, Feedback.TOO_EASY), (1, Feedback.RIGHT_LEVEL)]),
        ]
        with ad.no_grad():
            trunk = rec.trunk(corpus)
            batched = rec.batched_logits(
                corpus, trunk, np.stack([s.feedback for s in states])
            ).data
            singles = np.stack([rec.logits(s, trunk).data for s in states])
        np.testing.assert_allclose(batched, singles, atol=1e-12)

    def test_shared_trunk_gradients_match_independent_passes(self):
        corpus, rec, _ = small_setup()
        s1 = build_state(corpus, [])
        s2 = build_state(corpus, [(1, Feedback.TOO_HARD)])
        params = rec.parameters()

        learner = GnnLearner(rec)
        ad.zero_grads(params.values())
        logp, _, _ = learner.log_prob_entropy([s1, s2], [0, 2])
        ad.tsum(logp).backward()
        shared = {k: p.grad.copy() for k, p in params.items()}

        ad.zero_grads(params.values())
        for s, a in ((s1, 0), (s2, 2)):
            ad.pick(ad.log_softmax(rec.logits(s)), a).backward()
        for k in params:
            np.testing.assert_allclose(shared[k], params[k].grad, atol=1e-10,
                                       err_msg=k)

    def test_entropy_value(self):
        corpus, rec, state = small_setup()
        learner = GnnLearner(rec)
        _, ent, _ = learner.log_prob_entropy([state], [0])
        with ad.no_grad():
            p = ad.softmax(rec.logits(state)).data
        np.testing.assert_allclose(ent.data[0], -(p * np.log(p)).sum(), atol=1e-12)

    def test_mixed_corpus_minibatch_order(self):
        store = SyntheticStore(6)
        c1, c2 = make_chain(3, store), make_chain(4, store)
        rec = Recommender(np.random.default_rng(0), embed_dim=6, hidden=8)
        states = [build_state(c, []) for c in (c1, c2, c1, c2, c2)]
        actions = [0, 3, 2, 1, 0]
        learner = GnnLearner(rec)
        logp, _, greedy = learner.log_prob_entropy(states, actions)
        with ad.no_grad():
            for i, (s, a) in enumerate(zip(states, actions)):
                ls = ad.log_softmax(rec.logits(s)).data
                assert abs(logp.data[i] - ls[a]) < 1e-12
                assert greedy[i] == np.argmax(ls)


class TestStateConstruction:
    def test_initial_state_is_all_unshown(self, chain5):
        state = build_state(chain5, [])
        assert state.feedback.shape == (5, 4)
        np.testing.assert_array_equal(state.feedback[:, 0], 1.0)

    def test_latest_feedback_wins(self, chain5):
        state = build_state(
            chain5,
            [(2, Feedback.TOO_HARD), (1, Feedback.RIGHT_LEVEL), (2, Feedback.TOO_EASY)],
        )
        assert state.feedback[2, 3] == 1.0 and state.feedback[2].sum() == 1.0
        assert state.feedback[1, 2] == 1.0
        assert state.feedback[0, 0] == 1.0

    def test_history_tuples_may_carry_rewards(self, chain5):
        state = build_state(chain5, [(0, Feedback.RIGHT_LEVEL, 1.0)])
        assert state.feedback[0, 2] == 1.0


class TestActing:
    def test_greedy_is_argmax(self, chain5):
        rec = Recommender(np.random.default_rng(1), hidden=16)
        policy = GnnPolicy(rec, mode="greedy")

        class FakeEnv:
            corpus = chain5

        policy.begin_episode(FakeEnv)
        action, logp, state = policy.act(np.random.default_rng(0))
        with ad.no_grad():
            ls = ad.log_softmax(rec.logits(state)).data
        assert action == int(np.argmax(ls))
        assert abs(logp - ls[action]) < 1e-12

    def test_sampling_follows_distribution(self, chain5):
        rec = Recommender(np.random.default_rng(1), hidden=16)
        policy = GnnPolicy(rec, mode="sample")

        class FakeEnv:
            corpus = chain5

        policy.begin_episode(FakeEnv)
        rng = np.random.default_rng(7)
        counts = np.zeros(5)
        for _ in range(400):
            action, _, _ = policy.act(rng)
            counts[action] += 1
        with ad.no_grad():
            p = rec.action_distribution(build_state(chain5, []))
        # Loose multinomial check: all actions with p > 0.05 appear.
        assert all(counts[i] > 0 for i in range(5) if p[i] > 0.05)

    def test_observe_updates_history(self, chain5):
        rec = Recommender(np.random.default_rng(1), hidden=16)
        policy = GnnPolicy(rec)

        class FakeEnv:
            corpus = chain5

        policy.begin_episode(FakeEnv)
        policy.observe(3, Feedback.TOO_HARD, 0.0)
        _, _, state = policy.act(np.random.default_rng(0))
        assert state.feedback[3, 1] == 1.0


class TestPersistence:
    def test_round_trip_preserves_logits(self, tmp_path, chain5):
        rec = Recommender(np.random.default_rng(2), hidden=16)
        state = build_state(chain5, [(0, Feedback.RIGHT_LEVEL)])
        with ad.no_grad():
            want = rec.logits(state).data
        path = tmp_path / "rec.bin"
        rec.save(path)
        again = Recommender.load(path)
        assert again.hidden == 16 and again.heads == 4 and again.attention == "dot"
        with ad.no_grad():
            np.testing.assert_array_equal(again.logits(state).data, want)

    def test_missing_head_reinitialised_with_rng(self, tmp_path, chain5):
        rec = Recommender(np.random.default_rng(2), hidden=16)
        arrays = {k: p.data for k, p in rec.parameters().items() if not k.startswith("out.")}
        rec.save(tmp_path / "full.bin")
        from pathforge.checkpoint import load_arrays, save_arrays

        full = load_arrays(tmp_path / "full.bin")
        trimmed = {k: v for k, v in full.items() if not k.startswith("out.")}
        save_arrays(tmp_path / "trunk.bin", trimmed)

        with pytest.raises(CheckpointError, match="out.w"):
            Recommender.load(tmp_path / "trunk.bin")
        again = Recommender.load(tmp_path / "trunk.bin", rng=np.random.default_rng(9))
        for k, v in arrays.items():
            np.testing.assert_array_equal(again.parameters()[k].data, v)

    def test_shape_mismatch_rejected(self, tmp_path):
        rec = Recommender(np.random.default_rng(2), hidden=16)
        rec.save(tmp_path / "rec.bin")
        from pathforge.checkpoint import load_arrays, save_arrays

        arrays = load_arrays(tmp_path / "rec.bin")
        arrays["out.w"] = np.zeros((3, 3))
        save_arrays(tmp_path / "rec.bin", arrays)
        with pytest.raises(CheckpointError, match="shape"):
            Recommender.load(tmp_path / "rec.bin")

    def test_same_seed_same_init(self):
        a = Recommender(np.random.default_rng(5), hidden=16)
        b = Recommender(np.random.default_rng(5), hidden=16)
        for k, p in a.parameters().items():
            np.testing.assert_array_equal(p.data, b.parameters()[k].data)

    def test_keyword_representation_shape(self, chain5):
        rec = Recommender(np.random.default_rng(1), hidden=16)
        z = rec.keyword_representation(build_state(chain5, []))
        assert z.shape == (len(chain5.keyword_tokens), 16)
