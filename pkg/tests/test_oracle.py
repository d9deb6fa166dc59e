import math
from collections import Counter

import numpy as np
import pytest

from app.core.exceptions import OracleRefusedError
from app.models.generator import Generator
from app.oracle import (
    DenseDist,
    EnumSpace,
    exact_bridge_loss,
    exact_kl,
    exact_payoff,
    finite_difference_error,
    network_distribution,
    partition_Z,
    relative_error,
    run_oracle_suite,
    uniform_constraint,
)
from app.reward.ngram import similarity_score
from app.schemas.config import ModelConfig
from app.schemas.tokens import EOS

REFERENCE = [4, 5, 6, EOS]


class TestEnumSpace:
    def test_content_size(self):
        space = EnumSpace.content(4, 3)
        assert len(space) == 4 + 16 + 64
        assert all(seq[-1] == EOS for seq in space.sequences)
        assert REFERENCE in space

    def test_sampler_law_marks_forced_eos(self):
        space = EnumSpace.sampler_law(5, 3)
        assert len(space) == 1 + 4 + 16
        assert sum(space.forced) == 16
        assert space.forced[space.index([4, 0, EOS])]
        assert not space.forced[space.index([EOS])]

    def test_oversized_spaces_refused(self):
        with pytest.raises(OracleRefusedError):
            EnumSpace.content(9, 2)
        with pytest.raises(OracleRefusedError):
            EnumSpace.content(2, 5)
        with pytest.raises(OracleRefusedError):
            EnumSpace.sampler_law(9, 6)

    def test_duplicates_refused(self):
        with pytest.raises(OracleRefusedError):
            EnumSpace([(4, EOS), (4, EOS)], 5, 2)


class TestDenseDist:
    def test_validation(self):
        space = EnumSpace.content(2, 1)
        with pytest.raises(ValueError):
            DenseDist(space, np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            DenseDist(space, np.array([1.5, -0.5]))
        with pytest.raises(ValueError):
            DenseDist(space, np.array([1.0]))

    def test_from_weights(self):
        dist = DenseDist.from_weights(EnumSpace.content(2, 1), [3.0, 1.0])
        assert dist.prob([4, EOS]) == 0.75
        assert dist.argmax() == (4, EOS)


class TestExactPayoff:
    def test_normalized_with_mode_at_reference(self):
        space = EnumSpace.content(4, 3)
        payoff = exact_payoff(REFERENCE, 0.8, space)
        assert payoff.normalization_error() <= 1e-12
        assert payoff.argmax() == tuple(REFERENCE)

    def test_kernel_ratio(self):
        space = EnumSpace.content(4, 3)
        payoff = exact_payoff(REFERENCE, 0.5, space)
        other = [4, 5, 7, EOS]
        ratio = payoff.prob(REFERENCE) / payoff.prob(other)
        assert ratio == pytest.approx(math.exp((1.0 - similarity_score(other, REFERENCE)) / 0.5))

    def test_partition_is_order_invariant(self):
        space = EnumSpace.content(3, 3)
        z = partition_Z(REFERENCE, 0.8, space)
        assert partition_Z(REFERENCE, 0.8, space.permuted(np.random.default_rng(0))) == z

    def test_payoff_minimizes_bridge_loss(self):
        space = EnumSpace.content(3, 3)
        constraint = uniform_constraint(space)
        payoff = exact_payoff(REFERENCE, 0.8, space)
        best = exact_bridge_loss(payoff, REFERENCE, 0.8, constraint)
        assert best < exact_bridge_loss(constraint, REFERENCE, 0.8, constraint)
        delta = DenseDist.from_weights(space, [1.0 if seq == tuple(REFERENCE) else 1e-12 for seq in space.sequences])
        assert best < exact_bridge_loss(delta, REFERENCE, 0.8, constraint)


class TestExactKL:
    def test_two_point(self):
        space = EnumSpace.content(2, 1)
        kl = exact_kl(DenseDist(space, np.array([0.75, 0.25])), DenseDist.uniform(space))
        assert kl == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5), abs=1e-12)

    def test_self_divergence_is_zero(self):
        space = EnumSpace.content(3, 2)
        dist = exact_payoff([4, 5, EOS], 0.8, space)
        assert exact_kl(dist, dist) == 0.0

    def test_support_mismatch(self):
        space = EnumSpace.content(2, 1)
        with pytest.raises(ValueError):
            exact_kl(DenseDist.uniform(space), DenseDist(space, np.array([1.0, 0.0])))


class TestNetworkDistribution:
    @pytest.fixture
    def generator(self):
        config = ModelConfig(embed_dim=3, hidden_dim=4, max_len=3, beam=2, init_scale=0.8)
        return Generator(6, 5, config, rng=np.random.default_rng(1))

    def test_sums_to_one(self, generator):
        dist = network_distribution(generator, [4, EOS], EnumSpace.sampler_law(5, 3))
        assert dist.normalization_error() <= 1e-12

    def test_matches_ancestral_sampling(self, generator):
        """The prefix-tree walk agrees with the empirical law of ``sample``."""
        space = EnumSpace.sampler_law(5, 3)
        dist = network_distribution(generator, [4, EOS], space)
        rng = np.random.default_rng(2)
        n = 10000
        counts = Counter(tuple(generator.sample([4, EOS], rng).tokens) for _ in range(n))
        tv = 0.5 * sum(abs(counts.get(seq, 0) / n - dist.prob(seq)) for seq in space.sequences)
        assert tv <= 0.04

    def test_space_must_fit_the_model(self, generator):
        with pytest.raises(OracleRefusedError):
            network_distribution(generator, [4, EOS], EnumSpace.content(2, 2))


class TestRelativeError:
    def test_scaled_by_exact_norm(self):
        exact = {"w": np.array([3.0, 4.0])}
        assert relative_error({"w": np.array([3.0, 4.5])}, exact) == pytest.approx(0.1)


class TestOracleSuite:
    @pytest.mark.parametrize(
        "group",
        [
            "payoff",
            "kl",
            "delta_equals_mle",
            "gradient_integrity",
            "stratified_law_small",
            "coaching_gradient_small",
            "expected_reward_gradient",
            "kl_gradient",
            "gbn_gradient",
        ],
    )
    def test_fast_groups_pass(self, group):
        records = run_oracle_suite(only=[group])
        assert records
        failed = [r.name for r in records if not r.passed]
        assert not failed

    @pytest.mark.slow
    @pytest.mark.parametrize("group", ["stratified_law", "coaching_gradient"])
    def test_sampling_groups_pass(self, group):
        records = run_oracle_suite(only=[group])
        assert all(r.passed for r in records), [r.name for r in records if not r.passed]

    def test_small_coaching_group_reports_every_check(self):
        records = run_oracle_suite(only=["coaching_gradient_small"])
        assert [r.name for r in records] == [
            "coaching_small.mc_vs_exact",
            "coaching_small.constant_reward_exact",
            "coaching_small.constant_reward_mc",
        ]
        assert all(r.tolerance > 0.0 for r in records)


class TestFiniteDifferenceError:
    def _generator(self):
        cfg = ModelConfig(embed_dim=3, hidden_dim=3, max_len=3, beam=2, init_scale=0.5)
        return Generator(6, 6, cfg, rng=np.random.default_rng(4))

    def _sum_of_squares(self, model):
        return lambda: math.fsum(float(np.sum(v**2)) for v in model.params.values())

    def test_exact_gradient_scores_near_zero(self):
        generator = self._generator()
        before = {k: v.copy() for k, v in generator.params.items()}
        analytic = {k: 2.0 * v for k, v in generator.params.items()}
        err = finite_difference_error(generator, self._sum_of_squares(generator), analytic, np.random.default_rng(0))
        assert err < 1e-6
        assert all(np.array_equal(before[k], generator.params[k]) for k in before)

    def test_wrong_gradient_is_flagged(self):
        generator = self._generator()
        wrong = {k: np.zeros_like(v) for k, v in generator.params.items()}
        err = finite_difference_error(generator, self._sum_of_squares(generator), wrong, np.random.default_rng(0))
        assert err > 1e-3

    def test_parameters_restored_after_failure(self):
        generator = self._generator()
        original = generator.params

        def explode():
            raise RuntimeError("boom")

        with pytest.raises(RuntimeError):
            finite_difference_error(generator, explode, original, np.random.default_rng(0))
        assert generator.params is original
