"""Synthetic vision-language model tests.

The simulator must exhibit the failure mode the pipeline targets: high
prior attention on salient but query-irrelevant tokens that drags base
decoding toward "yes" on scenes whose true answer is "no".
"""

from __future__ import annotations

import numpy as np
import pytest

from iava.decoder import DecodeConfig, StepLogits, contrastive_distribution, decode_sequence
from iava.errors import InvariantViolation
from iava.negative_sample import MaskSpec, NoiseSpec, build_mask
from iava.protocol import GENERAL_INSTRUCTION
from iava.selection import SelectionParams, attention_stats, delta_attention, select_irrelevant
from iava.toy_lvlm import (
    EOS,
    TOY_QUERY,
    VOCAB,
    Scene,
    ToyConfig,
    ToySession,
    generate_scene,
    scene_rng,
    toy_attention,
    toy_step,
)


def default_scenes(n, seed=42):
    config = ToyConfig(seed=seed)
    return [generate_scene(config, scene_rng(seed, k)) for k in range(n)]


class TestSceneGeneration:
    def test_bit_for_bit_reproducible(self):
        config = ToyConfig()
        first = generate_scene(config, scene_rng(42, 7))
        second = generate_scene(config, scene_rng(42, 7))
        np.testing.assert_array_equal(first.saliency, second.saliency)
        np.testing.assert_array_equal(first.relevance, second.relevance)
        np.testing.assert_array_equal(first.evidence, second.evidence)
        assert first.gold == second.gold

    def test_distinct_indices_differ(self):
        config = ToyConfig()
        first = generate_scene(config, scene_rng(42, 0))
        second = generate_scene(config, scene_rng(42, 1))
        assert not np.array_equal(first.saliency, second.saliency)

    def test_gold_split_near_half(self):
        scenes = default_scenes(1000)
        yes_fraction = sum(s.gold == "yes" for s in scenes) / len(scenes)
        assert 0.46 <= yes_fraction <= 0.54

    def test_attribute_ranges(self):
        for scene in default_scenes(50):
            assert np.all((scene.saliency >= 0.0) & (scene.saliency <= 1.0))
            assert np.all((scene.relevance >= 0.0) & (scene.relevance <= 1.0))
            assert set(np.unique(scene.evidence)) <= {0, 1}

    def test_distractor_count_matches_config(self):
        for scene in default_scenes(50):
            assert int(scene.distractors.sum()) == scene.config.n_distractors

    def test_no_distractors_gold_yes_answers_dominate_att1(self):
        # Without distractors the highest general-instruction attention
        # falls on the answer tokens (the only salient evidence bearers).
        config = ToyConfig(n_distractors=0)
        found = 0
        for k in range(200):
            scene = generate_scene(config, scene_rng(17, k))
            if scene.gold != "yes":
                continue
            found += 1
            att1 = toy_attention(scene, "general")
            answers = (scene.relevance >= 0.5) & (scene.evidence == 1)
            n_answers = int(answers.sum())
            top = np.argsort(att1)[::-1][:n_answers]
            assert set(top.tolist()) == set(np.flatnonzero(answers).tolist())
        assert found > 50

    def test_tiny_config_capacity_cap(self):
        config = ToyConfig(n_tokens=1, n_distractors=0)
        for k in range(20):
            scene = generate_scene(config, scene_rng(3, k))
            assert scene.saliency.shape == (1,)


class TestToyConfig:
    def test_defaults(self):
        config = ToyConfig()
        assert config.n_tokens == 32
        assert config.n_distractors == 6
        assert config.seed == 42

    def test_rho_bounds(self):
        with pytest.raises(InvariantViolation):
            ToyConfig(rho=0.0)
        with pytest.raises(InvariantViolation):
            ToyConfig(rho=1.0)

    def test_distractors_must_fit(self):
        with pytest.raises(InvariantViolation):
            ToyConfig(n_tokens=4, n_distractors=4)
        with pytest.raises(InvariantViolation):
            ToyConfig(n_tokens=8, n_distractors=-1)

    def test_cluster_capacity_enforced(self):
        # decoy and context clusters scale with n_distractors and must
        # leave at least one free slot
        with pytest.raises(InvariantViolation):
            ToyConfig(n_tokens=32, n_distractors=14)


class TestSceneInvariant:
    def test_gold_must_match_answer_presence(self):
        config = ToyConfig(n_tokens=2, n_distractors=0)
        with pytest.raises(InvariantViolation):
            Scene(
                saliency=np.array([0.5, 0.5]),
                relevance=np.array([0.0, 0.0]),
                evidence=np.array([0, 0]),
                gold="yes",
                config=config,
            )
        with pytest.raises(InvariantViolation):
            Scene(
                saliency=np.array([0.5, 0.5]),
                relevance=np.array([0.0, 0.9]),
                evidence=np.array([0, 1]),
                gold="no",
                config=config,
            )

    def test_shape_checked(self):
        config = ToyConfig(n_tokens=2, n_distractors=0)
        with pytest.raises(InvariantViolation):
            Scene(
                saliency=np.array([0.5]),
                relevance=np.array([0.0, 0.0]),
                evidence=np.array([0, 0]),
                gold="no",
                config=config,
            )


class TestToyAttention:
    def test_singleton_scene(self):
        config = ToyConfig(n_tokens=1, n_distractors=0)
        scene = Scene(
            saliency=np.array([0.4]),
            relevance=np.array([0.2]),
            evidence=np.array([0]),
            gold="no",
            config=config,
        )
        np.testing.assert_allclose(toy_attention(scene, "general"), [1.0])
        np.testing.assert_allclose(toy_attention(scene, "query"), [1.0])

    def test_two_token_contrast(self):
        # s=[1,0], r=[0,1]: general mass follows saliency, query mass
        # follows relevance, each side > 0.99 at the default gains.
        config = ToyConfig(n_tokens=2, n_distractors=0)
        scene = Scene(
            saliency=np.array([1.0, 0.0]),
            relevance=np.array([0.0, 1.0]),
            evidence=np.array([0, 0]),
            gold="no",
            config=config,
        )
        general = toy_attention(scene, "general")
        query = toy_attention(scene, "query")
        assert general[0] > 0.99
        assert query[1] > 0.99

    def test_distributions_sum_to_one(self):
        for scene in default_scenes(100):
            for kind in ("general", "query"):
                att = toy_attention(scene, kind)
                assert np.all(att >= 0.0)
                assert abs(att.sum() - 1.0) < 1e-9

    def test_distractor_attention_strictly_drops(self):
        for scene in default_scenes(1000):
            att1 = toy_attention(scene, "general")
            att2 = toy_attention(scene, "query")
            drops = att2[scene.distractors] - att1[scene.distractors]
            assert np.all(drops < 0.0)

    def test_distractors_meet_selection_preconditions(self):
        # Delta < 0 and att1 above the mean must hold for every
        # distractor in at least 95% of seeded scenes.
        hits = 0
        scenes = default_scenes(1000)
        for scene in scenes:
            att1 = toy_attention(scene, "general")
            att2 = toy_attention(scene, "query")
            deltas = delta_attention(att1, att2)
            stats = attention_stats(att1)
            mask = scene.distractors
            if np.all(deltas[mask] < 0.0) and np.all(att1[mask] > stats.mu):
                hits += 1
        assert hits / len(scenes) >= 0.95

    def test_unknown_instruction_kind(self):
        scene = default_scenes(1)[0]
        with pytest.raises(InvariantViolation):
            toy_attention(scene, "caption")


class TestToyStep:
    def gold_no_scenes(self, n=200):
        return [s for s in default_scenes(n) if s.gold == "no"]

    def test_all_masked_ties_to_yes(self):
        scene = default_scenes(1)[0]
        mask = MaskSpec(keep=(), total_tokens=scene.config.n_tokens)
        logits = toy_step(scene, mask, TOY_QUERY, [])
        assert logits[0] == logits[1]
        assert int(np.argmax(logits[:2])) == 0

    def test_second_step_emits_eos(self):
        scene = default_scenes(1)[0]
        logits = toy_step(scene, "original", TOY_QUERY, [0])
        assert int(np.argmax(logits)) == EOS

    def test_first_step_eos_never_wins(self):
        for scene in default_scenes(50):
            logits = toy_step(scene, "original", TOY_QUERY, [])
            assert int(np.argmax(logits)) in (0, 1)

    def test_hallucination_prior_pushes_yes_on_gold_no(self):
        scenes = self.gold_no_scenes()
        assert len(scenes) > 50
        for scene in scenes:
            logits = toy_step(scene, "original", TOY_QUERY, [])
            assert logits[0] - logits[1] > 0.0

    def test_hallucination_rate_above_quarter(self):
        # Base greedy decoding answers yes on well over 25% of gold-no
        # scenes; at these constants it is every one of them.
        scenes = self.gold_no_scenes()
        rate = sum(
            int(np.argmax(toy_step(scene, "original", TOY_QUERY, []))) == 0
            for scene in scenes
        ) / len(scenes)
        assert rate > 0.25

    def test_contrastive_pass_reduces_yes_margin(self):
        # Keeping only the selected tokens makes the negative pass even
        # more yes-biased, so the contrastive combination shifts the
        # yes/no log-ratio below the base pass's.
        params = SelectionParams(i=16, lam=-0.1)
        checked = 0
        for scene in self.gold_no_scenes():
            att1 = toy_attention(scene, "general")
            att2 = toy_attention(scene, "query")
            selection = select_irrelevant(att1, att2, params)
            if not selection.indices:
                continue
            base = toy_step(scene, "original", TOY_QUERY, [])
            negative = toy_step(scene, build_mask(selection), TOY_QUERY, [])
            dist = contrastive_distribution(StepLogits(base, negative), 1.0)
            base_ratio = base[0] - base[1]
            contrastive_ratio = float(np.log(dist[0]) - np.log(dist[1]))
            assert contrastive_ratio < base_ratio
            checked += 1
        assert checked > 50

    def test_noise_variant_keeps_prior_drops_evidence(self):
        # Under noise the objects are unreadable: evidence contributes
        # nothing, the saliency-driven prior persists, and sigma does
        # not change the outcome.
        for scene in default_scenes(20):
            low = toy_step(scene, NoiseSpec(sigma=0.5), TOY_QUERY, [])
            high = toy_step(scene, NoiseSpec(sigma=5.0), TOY_QUERY, [])
            np.testing.assert_array_equal(low, high)
            assert low[0] - low[1] > 0.0

    def test_none_variant_zeroes_margin(self):
        scene = default_scenes(1)[0]
        logits = toy_step(scene, "none", TOY_QUERY, [])
        assert logits[0] == logits[1] == 0.0

    def test_mask_must_match_scene_size(self):
        scene = default_scenes(1)[0]
        with pytest.raises(InvariantViolation):
            toy_step(scene, MaskSpec(keep=(0,), total_tokens=16), TOY_QUERY, [])


class TestToySession:
    def test_reports_dimensions(self):
        session = ToySession.for_example(ToyConfig(), 0)
        assert session.n_tokens == 32
        assert session.vocab_size == len(VOCAB)

    def test_general_instruction_routes_to_prior_attention(self):
        session = ToySession.for_example(ToyConfig(), 0)
        np.testing.assert_array_equal(
            session.attention(GENERAL_INSTRUCTION),
            toy_attention(session.scene, "general"),
        )
        np.testing.assert_array_equal(
            session.attention(TOY_QUERY), toy_attention(session.scene, "query")
        )

    def test_context_manager(self):
        with ToySession.for_example(ToyConfig(), 0) as session:
            assert session.n_tokens == 32

    def test_decode_end_to_end_deterministic(self):
        config = DecodeConfig(alpha=1.0, seed=42, max_steps=4, stop_tokens=frozenset({EOS}))
        outcomes = []
        for _ in range(2):
            session = ToySession.for_example(ToyConfig(), 5)
            att1 = session.attention(GENERAL_INSTRUCTION)
            att2 = session.attention(TOY_QUERY)
            selection = select_irrelevant(att1, att2, SelectionParams(16, -0.1))
            outcomes.append(decode_sequence(session, TOY_QUERY, selection, config))
        assert outcomes[0] == outcomes[1]
