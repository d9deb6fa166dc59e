import numpy as np
import pytest

from app.core.exceptions import ConfigError
from app.reward.ngram import (
    TIER_VALUES,
    NGramTable,
    ngram_precision,
    similarity_score,
    step_gradient_coeffs,
    step_rewards,
    stepwise_reward,
)
from app.schemas.tokens import EOS

A, B, C, D, X = 4, 5, 6, 7, 9


class TestNGramPrecision:
    def test_swapped_tail(self):
        ref, cand = [A, B, C, D], [A, B, D, C]
        assert ngram_precision(cand, ref, 1) == 1.0
        assert ngram_precision(cand, ref, 2) == pytest.approx(1 / 3)
        assert ngram_precision(cand, ref, 3) == 0.0
        assert ngram_precision(cand, ref, 4) == 0.0

    def test_clipping(self):
        """Repeated tokens only match as often as they occur in the reference."""
        assert ngram_precision([A, A, A], [A, B, C], 1) == pytest.approx(1 / 3)

    def test_shorter_than_order(self):
        assert ngram_precision([A, B], [A, B], 3) == 0.0

    def test_order_checked(self):
        with pytest.raises(ValueError):
            ngram_precision([A], [A], 5)

    def test_table_totals(self):
        table = NGramTable([A, B, A, B, A])
        for n in range(1, 5):
            assert sum(table.counts[n].values()) == table.total(n)
        assert table.count((A, B)) == 2


class TestSimilarityScore:
    def test_identity_is_exactly_one(self):
        assert similarity_score([A, B, C, D, EOS], [A, B, C, D, EOS]) == 1.0

    def test_worked_example(self):
        assert similarity_score([A, B, D, C], [A, B, C, D]) == pytest.approx(0.16667, abs=1e-5)

    def test_disjoint(self):
        assert similarity_score([X, X], [A, B]) == 0.0

    def test_eos_ignored(self):
        assert similarity_score([A, B, D, C, EOS], [A, B, C, D]) == similarity_score([A, B, D, C], [A, B, C, D, EOS])

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(0)
        relabel = {tok: tok + 10 for tok in range(4, 10)}
        for _ in range(50):
            ref = [int(t) for t in rng.integers(4, 10, size=rng.integers(1, 7))]
            cand = [int(t) for t in rng.integers(4, 10, size=rng.integers(1, 7))]
            assert similarity_score(cand, ref) == similarity_score([relabel[t] for t in cand], [relabel[t] for t in ref])

    def test_range(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            ref = [int(t) for t in rng.integers(4, 7, size=5)]
            cand = [int(t) for t in rng.integers(4, 7, size=rng.integers(1, 8))]
            assert 0.0 <= similarity_score(cand, ref) <= 1.0


class TestStepRewards:
    def test_repeated_token_fails_every_tier(self):
        assert stepwise_reward([A, A], [A, B]) == 0.0

    def test_short_prefix_ladder(self):
        ref = [A, B, C, D]
        assert stepwise_reward([A, B], ref) == 0.6
        assert stepwise_reward([A, B, X], ref) == 0.0

    def test_short_prefix_lower_orders_continue_down(self):
        ref = [A, B, C, D]
        assert stepwise_reward([A], ref) == 0.6
        assert stepwise_reward([X, B], ref) == 0.3
        assert stepwise_reward([X, B, C], ref) == 0.3
        assert stepwise_reward([X, X, C], ref) == 0.1
        assert stepwise_reward([A, B, C], ref) == 0.6
        assert stepwise_reward([A, B, C, D], ref) == 1.0

    def test_correct_sequence(self):
        ref = [A, B, C, D, A, EOS]
        assert step_rewards(ref, ref) == [0.6, 0.6, 0.6, 1.0, 1.0, 1.0]

    def test_tiers_only(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            ref = [int(t) for t in rng.integers(4, 8, size=6)]
            cand = [int(t) for t in rng.integers(4, 8, size=rng.integers(1, 9))]
            assert set(step_rewards(cand, ref)) <= TIER_VALUES

    def test_incremental_matches_prefix_evaluation(self):
        """Each step reward depends only on its prefix."""
        rng = np.random.default_rng(3)
        for _ in range(50):
            ref = [int(t) for t in rng.integers(4, 8, size=5)]
            cand = [int(t) for t in rng.integers(4, 8, size=7)]
            rewards = step_rewards(cand, ref)
            assert rewards == [stepwise_reward(cand[:t], ref) for t in range(1, len(cand) + 1)]
            assert step_rewards(cand + [A], ref)[: len(cand)] == rewards

    def test_empty_prefix_rejected(self):
        with pytest.raises(ValueError):
            stepwise_reward([], [A])


class TestGradientCoefficients:
    def test_identity_at_unit_temperature(self):
        ref = [A, B, C, D, A, B]
        assert step_gradient_coeffs(ref, ref, 1.0)[3:] == [-1.0, -1.0, -1.0]

    def test_temperature_scaling(self):
        cand, ref = [A, B, X, D, C], [A, B, C, D]
        half = step_gradient_coeffs(cand, ref, 2.0)
        full = step_gradient_coeffs(cand, ref, 1.0)
        assert half == pytest.approx([c / 2 for c in full])
        assert full == pytest.approx([-r for r in step_rewards(cand, ref)])

    def test_temperature_must_be_positive(self):
        with pytest.raises(ConfigError):
            step_gradient_coeffs([A], [A], 0.0)
