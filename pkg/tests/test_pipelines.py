"""Pipeline protocol tests: demonstration datasets, stage stopping rules,
session bookkeeping, and the RNG stream separation that pairs eval
students across policies."""

import numpy as np
import pytest

from pathforge.corpus import build_grid_corpus
from pathforge.embeddings import SyntheticStore
from pathforge.env import (
    EpisodeConfig,
    LearningEpisode,
    PopulationConfig,
    Scenario,
)
from pathforge.pipelines import (
    FEEDBACK_CLASS,
    PipelineError,
    PretrainConfig,
    SessionConfig,
    feedback_demonstrations,
    imitation_stage,
    oracle_demonstrations,
    pretraining_corpora,
    run_adaptive_session,
)
from pathforge.recommender import Recommender
from pathforge.training import TrainConfig


@pytest.fixture(scope="module")
def chains():
    return pretraining_corpora()


class TestPretrainingCorpora:
    def test_collection_shape(self, chains):
        assert len(chains) == 14
        assert sorted(c.n_docs for c in chains) == [
            6, 7, 8, 8, 9, 10, 10, 11, 12, 12, 13, 14, 15, 16,
        ]

    def test_deterministic(self, chains):
        again = pretraining_corpora()
        for a, b in zip(chains, again):
            assert [d.keywords for d in a.docs] == [d.keywords for d in b.docs]


class TestDemonstrations:
    def test_oracle_labels_follow_chain_order(self, chains):
        states, labels = oracle_demonstrations(chains[:2])
        n0, n1 = chains[0].n_docs, chains[1].n_docs
        assert len(states) == n0 + n1
        assert labels[:n0].tolist() == list(range(n0))
        assert labels[n0:].tolist() == list(range(n1))

    def test_oracle_states_record_path_feedback(self, chains):
        states, _ = oracle_demonstrations(chains[:1])
        # state t: docs before t right_level, t and later untouched
        for t, s in enumerate(states):
            shown = np.flatnonzero(s.feedback[:, 0] == 0.0)
            assert shown.tolist() == list(range(t))
            assert (s.feedback[shown, 2] == 1.0).all()

    def test_feedback_labels_by_position(self, chains):
        states, labels = feedback_demonstrations(chains[:1])
        n = chains[0].n_docs
        for t, row in enumerate(labels):
            # earlier docs too easy, current right level, later too hard
            assert row.tolist() == [2] * t + [1] + [0] * (n - t - 1)

    def test_class_indices_cover_three_feedbacks(self):
        assert sorted(FEEDBACK_CLASS.values()) == [0, 1, 2]


class TestImitationStage:
    def test_converges_and_respects_cap(self, small_store):
        from conftest import make_chain

        chains = [make_chain(3, small_store), make_chain(4, small_store)]
        states, labels = oracle_demonstrations(chains)
        rng = np.random.default_rng(0)
        rec = Recommender(rng, embed_dim=10, hidden=16, heads=2)
        cfg = PretrainConfig(stage1_lr=0.01, stage1_step_cap=5000)
        stats = imitation_stage(rec, states, labels, cfg, rng)
        assert stats["train_agreement"] >= 0.99
        assert stats["supervised_steps"] <= 5000
        assert stats["supervised_steps"] % len(states) == 0

    def test_cap_stops_training(self, small_store):
        from conftest import make_chain

        chains = [make_chain(3, small_store)]
        states, labels = oracle_demonstrations(chains)
        rng = np.random.default_rng(0)
        rec = Recommender(rng, embed_dim=10, hidden=16, heads=2)
        # cap below one epoch still runs exactly one epoch then stops
        cfg = PretrainConfig(stage1_lr=1e-6, stage1_step_cap=2)
        stats = imitation_stage(rec, states, labels, cfg, rng)
        assert stats["supervised_steps"] == len(states)


class TestPretrainConfig:
    def test_rejects_unknown_variant(self):
        with pytest.raises(PipelineError, match="variant"):
            PretrainConfig(variant="bogus")


class TestAdaptiveSession:
    def test_row_bookkeeping(self, grid):
        rows, record = run_adaptive_session("random", grid, seed=0)
        assert len(rows) == 20
        assert [r[0] for r in rows] == [e for e in range(1, 11) for _ in (0, 1)]
        assert {r[1] for r in rows} == {"train", "eval"}
        assert all(r[3] == (5 if r[1] == "train" else 20) for r in rows)
        assert record["final_return"] == rows[-1][2]
        assert record["policy"] == "random"

    def test_deterministic_per_seed(self, grid):
        a, _ = run_adaptive_session("cmab", grid, seed=9)
        b, _ = run_adaptive_session("cmab", grid, seed=9)
        assert a == b

    def test_seed_changes_run(self, grid):
        a, _ = run_adaptive_session("random", grid, seed=0)
        b, _ = run_adaptive_session("random", grid, seed=1)
        assert a != b

    def test_unknown_policy(self, grid):
        with pytest.raises(PipelineError, match="valid"):
            run_adaptive_session("sarsa", grid, seed=0)

    def test_gnn_requires_checkpoint(self, grid):
        with pytest.raises(PipelineError, match="checkpoint"):
            run_adaptive_session("gnn", grid, seed=0)

    def test_oracle_upper_bounds_cmab(self, grid):
        cfg = SessionConfig(scenario=Scenario.UNIFORM)
        oracle_rows, _ = run_adaptive_session("oracle", grid, seed=2, cfg=cfg)
        cmab_rows, _ = run_adaptive_session("cmab", grid, seed=2, cfg=cfg)
        for o, c in zip(oracle_rows, cmab_rows):
            if o[1] == "eval":
                assert o[2] >= c[2]


class TestEvalStudentPairing:
    def test_eval_stream_is_policy_independent(self, grid):
        """The eval stream is the fourth spawned child and is consumed only
        by student sampling, so any two policies replay identical eval
        students at equal seed. Oracle returns depend on nothing but the
        student, which makes them a fingerprint of the stream."""
        cfg = SessionConfig(scenario=Scenario.UNIFORM)
        fingerprints = []
        for _ in range(2):
            eval_ss = np.random.SeedSequence(5).spawn(4)[3]
            rng = np.random.default_rng(eval_ss)
            pop = PopulationConfig(scenario=Scenario.UNIFORM)
            students = []
            for _ in range(cfg.epochs * cfg.eval_episodes):
                env = LearningEpisode(
                    grid, pop, EpisodeConfig(horizon=11, weighted_reward=True), rng
                )
                students.append(
                    (env.student.knowledge.tobytes(), tuple(sorted(env.student.pref_edges)))
                )
            fingerprints.append(students)
        assert fingerprints[0] == fingerprints[1]
