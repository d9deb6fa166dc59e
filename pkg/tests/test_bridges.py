import itertools
import math
from collections import Counter

import numpy as np
import pytest

from app.bridges import (
    BridgeRegistry,
    CoachingBridge,
    CoachingSampler,
    DeltaBridge,
    LMBridge,
    UniformBridge,
    bridge_density,
    build_bridge,
    edit_distance_law,
    hamming,
    stratified_sample_lm,
    stratified_sample_uniform,
    stratified_uniform_prob,
)
from app.core.exceptions import ConfigError, CorpusError
from app.models.generator import Generator
from app.models.language_model import UniformLanguageModel
from app.numerics.optim import Adadelta
from app.oracle.space import EnumSpace
from app.reward.ngram import similarity_score, step_rewards
from app.schemas.config import BridgeConfig, BridgeKind, ModelConfig, RewardMode
from app.schemas.tokens import EOS, NUM_SPECIALS

VOCAB = NUM_SPECIALS + 3
REFERENCE = [4, 5, 6, 4, EOS]


def _tv(samples, probability):
    counts = Counter(tuple(s) for s in samples)
    n = len(samples)
    support = set(counts) | set(probability)
    return 0.5 * sum(abs(counts.get(y, 0) / n - probability.get(y, 0.0)) for y in support)


def _law(reference, config, vocab):
    """Exact two-stage law, enumerated over every substitution pattern."""
    content = reference[:-1]
    pool = list(range(NUM_SPECIALS, vocab))
    law = {}
    for body in itertools.product(pool, repeat=len(content)):
        p = stratified_uniform_prob(list(body) + [EOS], reference, config, vocab)
        if p > 0:
            law[tuple(body) + (EOS,)] = p
    return law


class TestDeltaBridge:
    def test_sample_is_reference(self, rng):
        bridge = DeltaBridge(BridgeConfig())
        drawn = bridge.sample(REFERENCE, rng)
        assert drawn.tokens == REFERENCE
        assert drawn.m == 0
        assert drawn.score == 1.0

    def test_density(self):
        bridge = DeltaBridge(BridgeConfig())
        assert bridge.density(REFERENCE, REFERENCE) == 1.0
        assert bridge.density([4, EOS], REFERENCE) == 0.0


class TestEditDistanceLaw:
    def test_normalized_and_ordered(self):
        q = edit_distance_law(8, 0.8, 2)
        assert q.sum() == pytest.approx(1.0)
        # C(8, m) grows faster than the exponential decay here.
        assert q[0] < q[1] < q[2]

    def test_closed_form(self):
        q = edit_distance_law(4, 1.0, 1)
        w = np.array([1.0, 4.0 * math.exp(-0.25)])
        np.testing.assert_allclose(q, w / w.sum())

    def test_invalid_arguments(self):
        with pytest.raises(CorpusError):
            edit_distance_law(0, 0.8, 0)
        with pytest.raises(ConfigError):
            edit_distance_law(4, 0.0, 1)
        with pytest.raises(ConfigError):
            edit_distance_law(4, 0.8, 5)


class TestUniformBridge:
    def test_samples_are_substitutions(self, rng):
        config = BridgeConfig(kind=BridgeKind.UNIFORM, m_max=2)
        for _ in range(200):
            drawn = stratified_sample_uniform(REFERENCE, config, rng, VOCAB)
            assert len(drawn.tokens) == len(REFERENCE)
            assert drawn.tokens[-1] == EOS
            assert hamming(drawn.tokens, REFERENCE) == drawn.m <= 2
            assert all(tok >= NUM_SPECIALS for tok in drawn.tokens[:-1])
            assert drawn.score == similarity_score(drawn.tokens, REFERENCE)

    def test_strict_m_max(self, rng):
        config = BridgeConfig(kind=BridgeKind.UNIFORM, m_max=9)
        with pytest.raises(ConfigError):
            stratified_sample_uniform(REFERENCE, config, rng, VOCAB, strict=True)
        drawn = UniformBridge(config, vocab_size=VOCAB).sample(REFERENCE, rng)
        assert drawn.m <= 4

    def test_empty_reference(self, rng):
        with pytest.raises(CorpusError):
            stratified_sample_uniform([EOS], BridgeConfig(), rng, VOCAB)

    def test_law_sums_to_one(self):
        config = BridgeConfig(kind=BridgeKind.UNIFORM, m_max=2)
        assert math.fsum(_law(REFERENCE, config, VOCAB).values()) == pytest.approx(1.0, abs=1e-12)

    def test_empirical_law_matches(self, rng):
        """Total variation between 50k draws and the exact two-stage law stays below 0.02."""
        config = BridgeConfig(kind=BridgeKind.UNIFORM, tau=0.8)
        samples = [stratified_sample_uniform(REFERENCE, config, rng, VOCAB).tokens for _ in range(50000)]
        assert _tv(samples, _law(REFERENCE, config, VOCAB)) <= 0.02

    @pytest.mark.slow
    def test_empirical_law_matches_wide(self, rng):
        config = BridgeConfig(kind=BridgeKind.UNIFORM, tau=1.0, m_max=3)
        samples = [stratified_sample_uniform(REFERENCE, config, rng, VOCAB).tokens for _ in range(200000)]
        assert _tv(samples, _law(REFERENCE, config, VOCAB)) <= 0.02

    def test_density_is_payoff_kernel(self):
        config = BridgeConfig(kind=BridgeKind.UNIFORM, tau=0.5)
        candidate = [4, 5, 4, 4, EOS]
        expected = math.exp(similarity_score(candidate, REFERENCE) / 0.5)
        assert bridge_density(BridgeKind.UNIFORM, candidate, REFERENCE, config, VOCAB) == pytest.approx(expected)


class TestLMBridge:
    def test_uniform_lm_behaves_like_uniform(self, rng):
        """With a flat LM every allowed replacement is equally likely."""
        config = BridgeConfig(kind=BridgeKind.LM, m_max=1)
        lm = UniformLanguageModel(VOCAB)
        replacements = Counter()
        for _ in range(3000):
            drawn = stratified_sample_lm(REFERENCE, config, lm, rng)
            assert hamming(drawn.tokens, REFERENCE) == drawn.m
            for got, ref in zip(drawn.tokens, REFERENCE):
                if got != ref:
                    replacements[(ref, got)] += 1
        assert all(ref != got and got >= NUM_SPECIALS for ref, got in replacements)
        for_4 = [replacements[(4, 5)], replacements[(4, 6)]]
        assert abs(for_4[0] - for_4[1]) < 0.2 * sum(for_4)

    def test_needs_language_model(self):
        with pytest.raises(ConfigError):
            LMBridge(BridgeConfig(kind=BridgeKind.LM))

    def test_density_includes_lm(self):
        lm = UniformLanguageModel(VOCAB)
        bridge = LMBridge(BridgeConfig(kind=BridgeKind.LM, tau=1.0), lm=lm)
        expected = math.exp(-len(REFERENCE) * math.log(VOCAB) + 1.0)
        assert bridge.density(REFERENCE, REFERENCE) == pytest.approx(expected)


class TestRegistry:
    def test_every_kind_registered(self):
        assert set(BridgeRegistry.list_bridges()) == {k.value for k in BridgeKind}

    def test_build_dispatches_on_kind(self):
        assert isinstance(build_bridge(BridgeConfig(kind=BridgeKind.DELTA), VOCAB), DeltaBridge)
        assert isinstance(build_bridge(BridgeConfig(kind=BridgeKind.UNIFORM), VOCAB), UniformBridge)
        with pytest.raises(ConfigError):
            build_bridge(BridgeConfig(kind=BridgeKind.COACHING), VOCAB)

    def test_draw_needs_k(self, rng):
        with pytest.raises(ValueError):
            DeltaBridge(BridgeConfig()).draw(REFERENCE, 0, rng)


@pytest.fixture
def coaching_config():
    return ModelConfig(embed_dim=3, hidden_dim=4, max_len=3, beam=2, init_scale=0.5)


class TestCoachingBridge:
    def test_law_probability_normalizes(self, coaching_config):
        bridge = CoachingBridge(5, coaching_config, rng=np.random.default_rng(0))
        space = EnumSpace.sampler_law(5, coaching_config.max_len)
        total = math.fsum(bridge.law_probability(list(seq), [4, EOS]) for seq in space.sequences)
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_sampler_adapter(self, coaching_config, rng):
        bridge = CoachingBridge(5, coaching_config, rng=np.random.default_rng(0))
        sampler = CoachingSampler(BridgeConfig(kind=BridgeKind.COACHING), network=bridge)
        drawn = sampler.sample([4, 4, EOS], rng)
        assert drawn.tokens[-1] == EOS
        assert drawn.score == similarity_score(drawn.tokens, [4, 4, EOS])
        with pytest.raises(ConfigError):
            CoachingSampler(BridgeConfig(kind=BridgeKind.COACHING))

    def test_reward_modes(self, coaching_config):
        tokens, reference = [4, 5, 3, 4, EOS], [4, 5, 3, 4, EOS]
        step = CoachingBridge(6, coaching_config, BridgeConfig(kind=BridgeKind.COACHING))
        assert step.rewards(tokens, reference) == step_rewards(tokens, reference)
        seq = CoachingBridge(6, coaching_config, BridgeConfig(kind=BridgeKind.COACHING, reward_mode=RewardMode.SEQUENCE))
        assert seq.rewards(tokens, reference) == [1.0] * 5

    def test_moving_average_baseline(self, coaching_config):
        config = BridgeConfig(kind=BridgeKind.COACHING, tau=0.5, baseline=True, baseline_decay=0.9)
        bridge = CoachingBridge(6, coaching_config, config)
        assert bridge.reinforce_coefficients([1.0, 0.6]) == [-2.0, -1.2]
        second = bridge.reinforce_coefficients([0.0, 0.6])
        assert second == pytest.approx([2.0, 0.0])
        assert bridge.baseline[0] == pytest.approx(0.9)

    def test_update_moves_only_the_bridge(self, coaching_config):
        bridge = CoachingBridge(6, coaching_config, BridgeConfig(kind=BridgeKind.COACHING), rng=np.random.default_rng(1))
        generator = Generator(7, 6, coaching_config, rng=np.random.default_rng(2))
        gen_before = {k: v.copy() for k, v in generator.params.items()}
        bridge_before = {k: v.copy() for k, v in bridge.params.items()}
        losses = bridge.coaching_update(
            [([4, 5, EOS], [4, 5, EOS]), ([6, EOS], [5, EOS])], generator, Adadelta(bridge.params), np.random.default_rng(3)
        )
        assert not losses.skipped
        assert 0.0 <= losses.mean_reward <= 1.0
        assert any(not np.array_equal(bridge.params[k], bridge_before[k]) for k in bridge_before)
        for name, value in gen_before.items():
            np.testing.assert_array_equal(generator.params[name], value)

    def test_terms_can_be_disabled(self, coaching_config):
        bridge = CoachingBridge(6, coaching_config, BridgeConfig(kind=BridgeKind.COACHING), rng=np.random.default_rng(1))
        generator = Generator(7, 6, coaching_config, rng=np.random.default_rng(2))
        losses, grads = bridge.coaching_gradients(
            [([4, EOS], [4, EOS])], generator, np.random.default_rng(0), reinforce=False, mle=False
        )
        assert losses.total == 0.0
        assert all(not g.any() for g in grads.values())

    def test_pretrain_step_fits_targets(self, coaching_config):
        bridge = CoachingBridge(6, coaching_config, rng=np.random.default_rng(1))
        opt = Adadelta(bridge.params)
        first = bridge.pretrain_step([([4, 5, EOS], [4, EOS])], opt)
        for _ in range(30):
            last = bridge.pretrain_step([([4, 5, EOS], [4, EOS])], opt)
        assert last < first
