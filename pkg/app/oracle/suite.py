"""
The equivalence suite behind ``oracle-check``.

Each check compares an approximate component against its exact
enumeration counterpart and yields a :class:`CheckRecord`.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.bridges.coaching import CoachingBridge
from app.bridges.stratified import stratified_sample_uniform, stratified_uniform_prob
from app.core.config import settings
from app.models.generator import Generator
from app.models.language_model import LanguageModel
from app.numerics import functional as F
from app.numerics.gradcheck import grad_check
from app.oracle.exact import (
    exact_coaching_gradient,
    exact_kl,
    exact_payoff,
    expected_gbn_gradient,
    expected_reward,
    finite_difference_error,
    lm_constraint,
    network_distribution,
    partition_Z,
    payoff_kernel,
    perturbation_sweep,
    relative_error,
    uniform_constraint,
)
from app.oracle.space import DenseDist, EnumSpace
from app.schemas.config import BridgeConfig, BridgeKind, ModelConfig, RewardMode
from app.schemas.tokens import EOS, NUM_SPECIALS

logger = logging.getLogger(__name__)

Grads = Dict[str, np.ndarray]

ORACLE_TAUS = (0.4, 0.8, 1.2)
CONCENTRATION_TAUS = (0.4, 0.2, 0.1)
SMALL_MC_DRAWS = 2000
SMALL_SAMPLER_DRAWS = 20000


class CheckRecord(BaseModel):
    """Outcome of one oracle comparison."""

    name: str
    passed: bool
    value: float = Field(..., description="Measured discrepancy or statistic")
    tolerance: float
    detail: str = ""


def tiny_model_config(max_len: int = 3) -> ModelConfig:
    return ModelConfig(embed_dim=4, hidden_dim=4, max_len=max_len, beam=4, init_scale=0.5)


def mc_coaching_gradient(
    bridge: CoachingBridge,
    generator: Generator,
    source: Sequence[int],
    reference: Sequence[int],
    draws: int,
    rng: np.random.Generator,
    chunk: int = 500,
    reward_fn=None,
    mle: bool = True,
) -> Tuple[Grads, Grads]:
    """Monte-Carlo mean of the two-term bridge gradient and its batch-means standard error."""
    chunk = max(1, min(chunk, draws))
    chunk_means: List[Grads] = []
    for start in range(0, draws, chunk):
        size = min(chunk, draws - start)
        _, grads = bridge.coaching_gradients(
            [(source, reference)] * size, generator, rng, reward_fn=reward_fn, mle=mle
        )
        chunk_means.append({k: v * (size / chunk) for k, v in grads.items()})
    n = len(chunk_means)
    names = list(bridge.params)
    mean = {k: sum(c[k] for c in chunk_means) * chunk / draws for k in names}
    if n < 2:
        return mean, {k: np.full_like(v, np.inf) for k, v in mean.items()}
    stderr = {k: np.std(np.stack([c[k] for c in chunk_means]), axis=0, ddof=1) / math.sqrt(n) for k in names}
    return mean, stderr


def _add(a: Grads, b: Grads) -> Grads:
    return {k: a[k] + b[k] for k in a}


def _norm(g: Grads) -> float:
    return math.sqrt(math.fsum(float(np.sum(v**2)) for v in g.values()))


class OracleSuite:
    """Runs every oracle check with the configured draw counts."""

    def __init__(self, mc_draws: Optional[int] = None, sampler_draws: Optional[int] = None, seed: int = 0):
        self.mc_draws = mc_draws or settings.oracle_mc_draws
        self.sampler_draws = sampler_draws or settings.oracle_sampler_draws
        self.trials = settings.oracle_perturbations
        self.seed = seed

    def rng(self, offset: int) -> np.random.Generator:
        return np.random.default_rng(self.seed + offset)

    def checks(self) -> List[Tuple[str, Callable[[], List[CheckRecord]]]]:
        return [
            ("gradient_integrity", self.check_gradients),
            ("payoff", self.check_payoff),
            ("kl", self.check_kl),
            ("stratified_law", self.check_stratified_law),
            ("stratified_law_small", self.check_stratified_law_small),
            ("coaching_gradient", self.check_coaching_gradient),
            ("coaching_gradient_small", self.check_coaching_gradient_small),
            ("expected_reward_gradient", self.check_expected_reward_gradient),
            ("kl_gradient", self.check_kl_gradient),
            ("gbn_gradient", self.check_gbn_gradient),
            ("delta_equals_mle", self.check_delta_equals_mle),
        ]

    def run(self, only: Optional[Sequence[str]] = None) -> List[CheckRecord]:
        records: List[CheckRecord] = []
        for group, check in self.checks():
            if only and group not in only:
                continue
            for record in check():
                if record.passed:
                    logger.info(f"oracle {record.name}: ok ({record.value:.3g} <= {record.tolerance:.3g})")
                else:
                    logger.error(f"oracle {record.name}: FAILED ({record.value:.3g} > {record.tolerance:.3g}) {record.detail}")
                records.append(record)
        return records

    # Individual checks

    def check_gradients(self) -> List[CheckRecord]:
        cfg = tiny_model_config(max_len=4)
        generator = Generator(7, 7, cfg, rng=self.rng(1))
        bridge = CoachingBridge(7, cfg, rng=self.rng(2))
        source, target = [4, 5, 6, EOS], [6, 5, EOS]

        def seq2seq_loss(leaves):
            return generator.batch_loss([(source, [(target, 1.0), ([4, EOS], 0.5)])], leaves)

        def decoder_step(leaves):
            enc = generator.encode(source, leaves)
            logp, _ = generator.decode_step(4, generator.initial_state(enc, leaves), enc, leaves)
            return F.pick(logp, 5)

        def coaching_loss(leaves):
            picks = bridge.step_logprobs(target, [5, 4, EOS], leaves)
            return F.weighted_sum(picks, [-0.75, -0.375, -0.125])

        records = []
        for name, f, params in (
            ("grad_check.seq2seq_loss", seq2seq_loss, generator.params),
            ("grad_check.decoder_step", decoder_step, generator.params),
            ("grad_check.coaching_loss", coaching_loss, bridge.params),
        ):
            report = grad_check(f, params, max_entries=12, seed=self.seed)
            records.append(CheckRecord(name=name, passed=report.passed, value=report.max_error, tolerance=report.tolerance))
        return records

    def check_payoff(self) -> List[CheckRecord]:
        space = EnumSpace.content(4, 3)
        reference = [4, 5, 6, EOS]
        records = []
        lm = LanguageModel(space.vocab_size, tiny_model_config(), rng=self.rng(3))
        for tau in ORACLE_TAUS:
            payoff = exact_payoff(reference, tau, space)
            records.append(
                CheckRecord(
                    name=f"payoff.normalization.tau={tau}",
                    passed=payoff.normalization_error() <= 1e-12,
                    value=payoff.normalization_error(),
                    tolerance=1e-12,
                )
            )
            for label, optimum, constraint in (
                ("uniform", payoff, uniform_constraint(space)),
                ("lm", exact_payoff(reference, tau, space, lm), lm_constraint(space, lm)),
            ):
                report = perturbation_sweep(optimum, reference, tau, constraint, self.rng(4), trials=self.trials)
                records.append(
                    CheckRecord(
                        name=f"payoff.optimality.{label}.tau={tau}",
                        passed=report.passed,
                        value=float(report.trials - report.wins),
                        tolerance=0.0,
                        detail=f"{report.wins}/{report.trials} perturbations lose",
                    )
                )
        z = partition_Z(reference, 0.8, space)
        z_perm = partition_Z(reference, 0.8, space.permuted(self.rng(5)))
        records.append(
            CheckRecord(name="payoff.order_invariance", passed=z == z_perm, value=abs(z - z_perm), tolerance=0.0)
        )
        peaks = [exact_payoff(reference, tau, space).prob(reference) for tau in CONCENTRATION_TAUS]
        monotone = all(b > a for a, b in zip(peaks, peaks[1:]))
        records.append(
            CheckRecord(
                name="payoff.temperature_concentration",
                passed=monotone,
                value=peaks[-1],
                tolerance=0.0,
                detail=f"P(Y*) at tau {CONCENTRATION_TAUS}: {[round(p, 6) for p in peaks]}",
            )
        )
        return records

    def check_kl(self) -> List[CheckRecord]:
        space = EnumSpace.content(2, 1)
        kl = exact_kl(DenseDist(space, np.array([0.75, 0.25])), DenseDist(space, np.array([0.5, 0.5])))
        expected = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
        return [CheckRecord(name="kl.two_point", passed=abs(kl - expected) <= 1e-12, value=abs(kl - expected), tolerance=1e-12)]

    def _stratified_records(self, name: str, n_content: int, length: int, draws: int, offset: int) -> List[CheckRecord]:
        vocab_size = NUM_SPECIALS + n_content
        config = BridgeConfig(kind=BridgeKind.UNIFORM, tau=0.8, m_max=length)
        reference = list(range(NUM_SPECIALS, NUM_SPECIALS + length)) + [EOS]
        rng = self.rng(offset)
        counts: Dict[Tuple[int, ...], int] = {}
        for _ in range(draws):
            key = tuple(stratified_sample_uniform(reference, config, rng, vocab_size).tokens)
            counts[key] = counts.get(key, 0) + 1
        support = EnumSpace.content(n_content, length).sequences
        tv = 0.5 * math.fsum(
            abs(counts.get(seq, 0) / draws - stratified_uniform_prob(seq, reference, config, vocab_size)) for seq in support
        )
        return [CheckRecord(name=f"{name}.total_variation", passed=tv <= 0.02, value=tv, tolerance=0.02)]

    def check_stratified_law(self) -> List[CheckRecord]:
        return self._stratified_records("stratified", 4, 3, self.sampler_draws, 6)

    def check_stratified_law_small(self) -> List[CheckRecord]:
        return self._stratified_records("stratified_small", 2, 2, min(self.sampler_draws, SMALL_SAMPLER_DRAWS), 12)

    def _coaching_setup(self, vocab_size: int, max_len: int, offset: int):
        cfg = tiny_model_config(max_len=max_len)
        space = EnumSpace.sampler_law(vocab_size, cfg.max_len)
        bridge_cfg = BridgeConfig(kind=BridgeKind.COACHING, tau=0.8, reward_mode=RewardMode.SEQUENCE)
        bridge = CoachingBridge(vocab_size, cfg, bridge_cfg, rng=self.rng(offset))
        generator = Generator(vocab_size, vocab_size, cfg, rng=self.rng(offset + 1))
        return space, bridge, generator

    def _coaching_records(
        self,
        name: str,
        vocab_size: int,
        max_len: int,
        source: List[int],
        reference: List[int],
        draws: int,
        offset: int,
        sigmas: Optional[float] = None,
    ) -> List[CheckRecord]:
        """MC against exact gradients; ``sigmas`` swaps the 1e-2 relative bound for a standard-error bound."""
        space, bridge, generator = self._coaching_setup(vocab_size, max_len, offset)
        gen_dist = network_distribution(generator, source, space)
        term_a, term_b = exact_coaching_gradient(bridge, reference, gen_dist, space)
        exact = _add(term_a, term_b)
        if sigmas is None:
            mc, _ = mc_coaching_gradient(bridge, generator, source, reference, draws, self.rng(offset + 2))
            err = relative_error(mc, exact)
            records = [CheckRecord(name=f"{name}.mc_vs_exact", passed=err <= 1e-2, value=err, tolerance=1e-2)]
        else:
            mc, stderr = mc_coaching_gradient(
                bridge, generator, source, reference, draws, self.rng(offset + 2), chunk=max(1, draws // 40)
            )
            gap, bound = _norm({k: mc[k] - exact[k] for k in exact}), sigmas * _norm(stderr)
            records = [CheckRecord(name=f"{name}.mc_vs_exact", passed=gap <= bound, value=gap, tolerance=bound)]

        constant = lambda tokens, ref: [0.5] * len(tokens)  # noqa: E731
        const_a, _ = exact_coaching_gradient(bridge, reference, gen_dist, space, reward_fn=constant)
        records.append(
            CheckRecord(name=f"{name}.constant_reward_exact", passed=_norm(const_a) <= 1e-10, value=_norm(const_a), tolerance=1e-10)
        )
        const_draws = max(2000, draws // 10) if sigmas is None else draws
        mean, stderr = mc_coaching_gradient(
            bridge,
            generator,
            source,
            reference,
            const_draws,
            self.rng(offset + 3),
            chunk=max(1, const_draws // 40),
            reward_fn=constant,
            mle=False,
        )
        sigma = _norm(stderr)
        records.append(
            CheckRecord(name=f"{name}.constant_reward_mc", passed=_norm(mean) <= 3.0 * sigma, value=_norm(mean), tolerance=3.0 * sigma)
        )
        return records

    def check_coaching_gradient(self) -> List[CheckRecord]:
        return self._coaching_records("coaching", NUM_SPECIALS + 3, 3, [4, 5, EOS], [5, 6, EOS], self.mc_draws, 7)

    def check_coaching_gradient_small(self) -> List[CheckRecord]:
        draws = min(self.mc_draws, SMALL_MC_DRAWS)
        return self._coaching_records("coaching_small", NUM_SPECIALS + 1, 2, [4, EOS], [4, EOS], draws, 20, sigmas=4.0)

    def check_expected_reward_gradient(self) -> List[CheckRecord]:
        """Sequence-mode term (a) is the exact gradient of E_{p_η}[−S/τ]."""
        space, bridge, generator = self._coaching_setup(NUM_SPECIALS + 3, 3, 30)
        reference, tau = [5, 6, EOS], bridge.bridge_config.tau
        gen_dist = network_distribution(generator, [4, 5, EOS], space)
        term_a, _ = exact_coaching_gradient(bridge, reference, gen_dist, space)
        err = finite_difference_error(bridge, lambda: expected_reward(bridge, reference, space, tau), term_a, self.rng(32))
        return [CheckRecord(name="expected_reward.term_a_vs_fd", passed=err <= 1e-4, value=err, tolerance=1e-4)]

    def check_kl_gradient(self) -> List[CheckRecord]:
        """Term (b) is the gradient of KL(p_θ ‖ p_η) in the bridge parameters."""
        space, bridge, generator = self._coaching_setup(NUM_SPECIALS + 3, 3, 33)
        reference = [5, 6, EOS]
        gen_dist = network_distribution(generator, [4, 5, EOS], space)
        _, term_b = exact_coaching_gradient(bridge, reference, gen_dist, space)

        def kl() -> float:
            return exact_kl(gen_dist, network_distribution(bridge, reference, space))

        err = finite_difference_error(bridge, kl, term_b, self.rng(35))
        return [CheckRecord(name="kl_gradient.term_b_vs_fd", passed=err <= 1e-4, value=err, tolerance=1e-4)]

    def check_gbn_gradient(self) -> List[CheckRecord]:
        """The expected GBN step gradient is ∇_θ KL(q ‖ p_θ) for a fixed bridge law q.

        q is kept off the truncated sequences, whose scored EOS the sampler never draws.
        """
        space, _, generator = self._coaching_setup(NUM_SPECIALS + 3, 3, 36)
        source, reference = [4, 5, EOS], [5, 6, EOS]
        weights = payoff_kernel(reference, 0.8, space) * ~np.asarray(space.forced)
        bridge_dist = DenseDist.from_weights(space, weights)
        expected = expected_gbn_gradient(generator, source, bridge_dist)

        def kl() -> float:
            return exact_kl(bridge_dist, network_distribution(generator, source, space))

        err = finite_difference_error(generator, kl, expected, self.rng(38))
        return [CheckRecord(name="gbn_gradient.expected_vs_fd", passed=err <= 1e-3, value=err, tolerance=1e-3)]

    def check_delta_equals_mle(self) -> List[CheckRecord]:
        cfg = tiny_model_config(max_len=5)
        generator = Generator(8, 8, cfg, rng=self.rng(11))
        pairs = [([4, 5, EOS], [5, 4, 6, EOS]), ([6, EOS], [7, EOS])]
        _, mle = generator.gradients([(x, [(y, 1.0)]) for x, y in pairs])
        _, delta = generator.gbn_gradients([(x, [y] * 5) for x, y in pairs])
        identical = all(np.array_equal(mle[k], delta[k]) for k in mle)
        return [CheckRecord(name="delta.bitwise_mle", passed=identical, value=0.0 if identical else 1.0, tolerance=0.0)]


def run_oracle_suite(
    mc_draws: Optional[int] = None, sampler_draws: Optional[int] = None, seed: int = 0, only: Optional[Sequence[str]] = None
) -> List[CheckRecord]:
    return OracleSuite(mc_draws, sampler_draws, seed).run(only)
