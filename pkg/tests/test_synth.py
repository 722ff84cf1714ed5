"""Generator determinism, the planted label rule, and the distant-shared-
belief structure of generated worlds."""

import math

import pytest

from beliefcast.data import Polarity, load_dataset_dir
from beliefcast.graph import build_graph
from beliefcast.persona import read_personas
from beliefcast.synth import (
    SynthConfig,
    SynthError,
    generate_world,
    planted_label,
    world_statistics,
    write_world,
)


SMALL = SynthConfig(
    n_users=40,
    n_communities=2,
    n_news=12,
    responses_per_news=10,
    lurker_fraction=0.5,
    label_noise=0.0,
    seed=3,
)


class TestConfig:
    def test_probability_bounds(self):
        with pytest.raises(SynthError):
            SynthConfig(p_follow_intra=1.5)

    def test_label_noise_range(self):
        with pytest.raises(SynthError):
            SynthConfig(label_noise=1.0)

    def test_responses_bounded_by_users(self):
        with pytest.raises(SynthError):
            SynthConfig(n_users=5, responses_per_news=6)


class TestPlantedLabel:
    def test_formula_example(self):
        # single belief with stance 2.4 -> positive, floor(2.4) = 2
        assert planted_label(2.4, 0.5) == (Polarity.POSITIVE, 2)

    def test_negative_side(self):
        assert planted_label(-1.2, 0.5) == (Polarity.NEGATIVE, 1)

    def test_neutral_band(self):
        assert planted_label(0.3, 0.5) == (Polarity.NEUTRAL, 0)

    def test_cap_at_three(self):
        assert planted_label(9.9, 0.5) == (Polarity.POSITIVE, 3)


class TestGenerateWorld:
    def test_same_seed_identical_bytes(self, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        for out in (a_dir, b_dir):
            dataset, personas = generate_world(SMALL)
            write_world(dataset, personas, out)
        for name in ("users.jsonl", "news.jsonl", "responses.jsonl", "follows.tsv", "gold_personas.jsonl"):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()

    def test_lurker_fraction_one_strips_all_text(self):
        config = SynthConfig(
            n_users=20, n_news=6, responses_per_news=8, lurker_fraction=1.0, seed=1
        )
        dataset, _ = generate_world(config)
        assert all(not u.profile and not u.history for u in dataset.users.values())

    def test_noise_free_labels_rederivable_from_gold(self):
        import numpy as np

        from beliefcast.values import BELIEF_VOCABULARY

        dataset, personas = generate_world(SMALL)
        beliefs_of = {p.user_id: set(p.beliefs) for p in personas}
        # replay the generator's stance draw (beliefs, follow mask, and the
        # lurker permutation are consumed from the stream before it)
        n = SMALL.n_users
        rng2 = np.random.default_rng(SMALL.seed)
        beliefs = [
            sorted(rng2.choice(20, size=SMALL.beliefs_per_user, replace=False))
            for _ in range(n)
        ]
        rng2.random((n, n))
        rng2.permutation(n)
        stance = rng2.uniform(-1.0, 1.0, size=(SMALL.n_news, 20))
        index_of = {b: i for i, b in enumerate(BELIEF_VOCABULARY)}
        news_index = {nid: j for j, nid in enumerate(sorted(dataset.news))}
        for r in dataset.responses:
            score = sum(
                stance[news_index[r.news_id], index_of[b]] for b in beliefs_of[r.user_id]
            )
            polarity, intensity = planted_label(score, SMALL.threshold)
            assert (r.polarity, r.intensity) == (polarity, intensity)

    def test_world_passes_validation_and_graph_build(self, tmp_path):
        dataset, personas = generate_world(SMALL)
        write_world(dataset, personas, tmp_path)
        loaded = load_dataset_dir(tmp_path)
        assert loaded == dataset
        graph = build_graph(loaded, read_personas(tmp_path / "gold_personas.jsonl"))
        assert len(graph.users) == SMALL.n_users
        assert len(graph.belief_edges) == SMALL.n_users * SMALL.beliefs_per_user

    def test_splits_are_80_10_10(self):
        dataset, _ = generate_world(SMALL)
        total = len(dataset.responses)
        assert len(dataset.samples("train")) == math.floor(0.8 * total)
        assert len(dataset.samples("dev")) == math.floor(0.1 * total)

    def test_too_few_responses_for_splits_rejected(self):
        with pytest.raises(SynthError):
            generate_world(
                SynthConfig(n_users=4, n_news=1, responses_per_news=4, seed=0)
            )


class TestWorldStatistics:
    def test_complete_graph_ratio_zero(self):
        config = SynthConfig(
            n_users=12,
            n_communities=1,
            p_follow_intra=1.0,
            n_news=6,
            responses_per_news=8,
            seed=2,
        )
        dataset, personas = generate_world(config)
        summary = world_statistics(dataset, personas)
        assert summary.distant_shared_belief_ratio == 0.0

    def test_disconnected_communities_ratio_near_one(self):
        config = SynthConfig(
            n_users=40,
            n_communities=2,
            p_follow_intra=0.6,
            p_follow_inter=0.0,
            n_news=10,
            responses_per_news=10,
            seed=4,
        )
        dataset, personas = generate_world(config)
        summary = world_statistics(dataset, personas)
        # beliefs are community-independent, so nearly every holder shares
        # with someone in the unreachable other community
        assert summary.distant_shared_belief_ratio > 0.9

    def test_default_world_ratio_above_threshold(self):
        for seed in range(1, 6):
            import dataclasses

            config = dataclasses.replace(SynthConfig(), seed=seed)
            dataset, personas = generate_world(config)
            summary = world_statistics(dataset, personas)
            assert summary.distant_shared_belief_ratio > 0.3, f"seed {seed}"

    def test_lurker_count_reported(self):
        dataset, personas = generate_world(SMALL)
        summary = world_statistics(dataset, personas)
        assert summary.n_lurkers == math.floor(SMALL.lurker_fraction * SMALL.n_users)
