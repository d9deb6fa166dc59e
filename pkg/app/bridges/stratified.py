"""
Two-stage stratified sampling from the payoff bridges.

Stage one draws an edit distance ``m`` from

    q(m) ∝ C(len, m) · exp(−m / (τ · len)),   m = 0..m_max

and stage two substitutes ``m`` distinct positions of the reference. The
uniform bridge draws each replacement uniformly from the content symbols
other than the original; the LM bridge walks the chosen positions left to
right and draws from the language model's next-token distribution given the
partially edited prefix, with the original token excluded and the rest
renormalized. Lengths never change.
"""

import math
from typing import Optional, Sequence

import numpy as np

from app.bridges.base import BridgeInterface, BridgeRegistry, BridgeSample
from app.bridges.static import lm_payoff_unnorm, uniform_payoff_unnorm
from app.core.exceptions import ConfigError, CorpusError
from app.reward.ngram import similarity_score
from app.schemas.config import BridgeConfig, BridgeKind
from app.schemas.tokens import BOS, NUM_SPECIALS, strip_eos, with_eos


def edit_distance_law(length: int, tau: float, m_max: int) -> np.ndarray:
    """Normalized q(m) for m = 0..m_max."""
    if length < 1:
        raise CorpusError("Cannot perturb an empty reference")
    if not tau > 0:
        raise ConfigError(f"Temperature must be positive, got {tau}")
    if not 0 <= m_max <= length:
        raise ConfigError(f"m_max={m_max} outside 0..{length}")
    log_w = np.array([math.log(math.comb(length, m)) - m / (tau * length) for m in range(m_max + 1)])
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


def content_ids(vocab_size: int) -> np.ndarray:
    return np.arange(NUM_SPECIALS, vocab_size)


def _stage_one(content: Sequence[int], config: BridgeConfig, rng: np.random.Generator, strict: bool, m: Optional[int] = None):
    if not content:
        raise CorpusError("Cannot perturb an empty reference")
    if m is None:
        q = edit_distance_law(len(content), config.tau, config.m_max_for(len(content), strict=strict))
        m = int(rng.choice(len(q), p=q))
    elif not 0 <= m <= len(content):
        raise ConfigError(f"Edit distance {m} outside 0..{len(content)}")
    positions = np.sort(rng.choice(len(content), size=m, replace=False)) if m else np.zeros(0, dtype=int)
    return m, [int(i) for i in positions]


def stratified_sample_uniform(
    reference: Sequence[int],
    config: BridgeConfig,
    rng: np.random.Generator,
    vocab_size: int,
    strict: bool = True,
    m: Optional[int] = None,
) -> BridgeSample:
    """Y at Hamming distance exactly m from Y*, replacements uniform over V minus the original.

    A given ``m`` skips stage one.
    """
    content = strip_eos(reference)
    m, positions = _stage_one(content, config, rng, strict, m)
    pool = content_ids(vocab_size)
    edited = list(content)
    for pos in positions:
        choices = pool[pool != edited[pos]]
        if len(choices) == 0:
            raise ConfigError("Vocabulary has no alternative content symbol to substitute")
        edited[pos] = int(rng.choice(choices))
    tokens = with_eos(edited)
    return BridgeSample(tokens=tokens, m=m, score=similarity_score(tokens, reference))


def stratified_sample_lm(
    reference: Sequence[int],
    config: BridgeConfig,
    lm,
    rng: np.random.Generator,
    strict: bool = True,
    m: Optional[int] = None,
) -> BridgeSample:
    """Stage two replaced by history-conditioned LM draws."""
    content = strip_eos(reference)
    m, positions = _stage_one(content, config, rng, strict, m)
    mask = np.zeros(lm.vocab_size, dtype=bool)
    mask[NUM_SPECIALS:] = True
    edited = list(content)
    for pos in positions:
        probs = lm.step_dist([BOS] + edited[:pos]) * mask
        if 0 <= edited[pos] < len(probs):
            probs[edited[pos]] = 0.0
        total = probs.sum()
        if not total > 0:
            raise ConfigError("Language model leaves no alternative content symbol to substitute")
        edited[pos] = int(rng.choice(len(probs), p=probs / total))
    tokens = with_eos(edited)
    return BridgeSample(tokens=tokens, m=m, score=similarity_score(tokens, reference))


def stratified_uniform_prob(
    candidate: Sequence[int], reference: Sequence[int], config: BridgeConfig, vocab_size: int
) -> float:
    """Probability of ``candidate`` under the uniform two-stage sampler.

    P(Y) = q(m) / C(len, m) / (|V| − 1)^m with m the Hamming distance;
    zero for other lengths or distances above m_max.
    """
    cand, ref = strip_eos(candidate), strip_eos(reference)
    if len(cand) != len(ref):
        return 0.0
    m_max = config.m_max_for(len(ref))
    m = sum(a != b for a, b in zip(cand, ref))
    if m > m_max:
        return 0.0
    q = edit_distance_law(len(ref), config.tau, m_max)
    n_content = vocab_size - NUM_SPECIALS
    return float(q[m] / math.comb(len(ref), m) / (n_content - 1) ** m)


@BridgeRegistry.register
class UniformBridge(BridgeInterface):
    kind = BridgeKind.UNIFORM

    def __init__(self, config: BridgeConfig, vocab_size: int, strict: bool = False, **_):
        super().__init__(config)
        self.vocab_size = vocab_size
        self.strict = strict

    def sample(self, reference: Sequence[int], rng: np.random.Generator) -> BridgeSample:
        return stratified_sample_uniform(reference, self.config, rng, self.vocab_size, self.strict)

    def density(self, candidate: Sequence[int], reference: Sequence[int]) -> float:
        return uniform_payoff_unnorm(candidate, reference, self.config.tau)


@BridgeRegistry.register
class LMBridge(BridgeInterface):
    kind = BridgeKind.LM

    def __init__(self, config: BridgeConfig, lm=None, strict: bool = False, **_):
        super().__init__(config)
        if lm is None:
            raise ConfigError("The LM bridge needs a pre-trained language model")
        self.lm = lm
        self.strict = strict

    def sample(self, reference: Sequence[int], rng: np.random.Generator) -> BridgeSample:
        return stratified_sample_lm(reference, self.config, self.lm, rng, self.strict)

    def density(self, candidate: Sequence[int], reference: Sequence[int]) -> float:
        return lm_payoff_unnorm(candidate, reference, self.config.tau, self.lm)


def hamming(a: Sequence[int], b: Sequence[int]) -> Optional[int]:
    """Substitution distance between equal-length content sequences, else None."""
    a, b = strip_eos(a), strip_eos(b)
    if len(a) != len(b):
        return None
    return sum(x != y for x, y in zip(a, b))
