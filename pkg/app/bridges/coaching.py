"""
The trainable coaching bridge p_η(Y | Y*).

An encoder-decoder reading Y* and writing Y. Each bridge update sums two
gradient terms and takes one optimizer step on the bridge only:

  (a) REINFORCE: Y ~ p_η(· | Y*), Σ_t c_t ∇ log p_η(y_t | y_<t, Y*) with
      c_t = −s_t / τ (step rewards) or −S(Y, Y*) / τ (sequence mode),
      optionally minus a per-position moving-average baseline;
  (b) inverse KL: Y ~ p_θ(· | X), ∇(−log p_η(Y | Y*)), i.e. MLE of the
      bridge on the generator's samples.

Forced EOS tokens were not sampled and contribute to neither term.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.bridges.base import BridgeInterface, BridgeRegistry, BridgeSample
from app.core.exceptions import ConfigError
from app.models.seq2seq import Seq2SeqModel
from app.numerics import functional as F
from app.numerics.optim import Adadelta
from app.numerics.tensor import Tape, Tensor, backward
from app.reward.ngram import similarity_score, step_rewards
from app.schemas.config import BridgeConfig, BridgeKind, ModelConfig, RewardMode
from app.schemas.tokens import SampleResult

logger = logging.getLogger(__name__)

RewardFn = Callable[[Sequence[int], Sequence[int]], List[float]]
CoachingBatch = Sequence[Tuple[Sequence[int], Sequence[int]]]


class CoachingLosses(BaseModel):
    """Values of one bridge update, averaged over the batch."""

    reinforce: float = Field(default=0.0, description="Surrogate Σ_t c_t log p_η(y_t) of term (a)")
    mle: float = Field(default=0.0, description="−log p_η(Y | Y*) on generator samples, term (b)")
    mean_reward: float = Field(default=0.0, description="Mean S(Y, Y*) of the term-(a) samples")
    skipped: bool = False

    @property
    def total(self) -> float:
        return self.reinforce + self.mle


class CoachingBridge(Seq2SeqModel):
    """Encoder-decoder over the target vocabulary, updated by REINFORCE plus inverse-KL MLE."""

    def __init__(
        self,
        vocab_size: int,
        config: Optional[ModelConfig] = None,
        bridge_config: Optional[BridgeConfig] = None,
        rng: Optional[np.random.Generator] = None,
        params=None,
    ):
        super().__init__(vocab_size, vocab_size, config, rng, params)
        self.bridge_config = bridge_config or BridgeConfig(kind=BridgeKind.COACHING)
        self.baseline = np.zeros(self.config.max_len)
        self.baseline_seen = np.zeros(self.config.max_len, dtype=bool)

    # Sampling

    def coaching_sample(self, reference: Sequence[int], rng: np.random.Generator) -> SampleResult:
        return self.sample(reference, rng)

    def law_probability(self, candidate: Sequence[int], reference: Sequence[int]) -> float:
        """Exact probability of ``candidate`` under the sampling law."""
        truncated = len(candidate) == self.config.max_len
        result = SampleResult(tokens=list(candidate), logprob=0.0, truncated=truncated)
        return math.exp(self.sampled_logprob(reference, result).item())

    # Rewards

    def rewards(self, tokens: Sequence[int], reference: Sequence[int]) -> List[float]:
        """Per-position rewards before the temperature and baseline are applied."""
        if self.bridge_config.reward_mode is RewardMode.SEQUENCE:
            return [similarity_score(tokens, reference)] * len(tokens)
        return step_rewards(tokens, reference)

    def reinforce_coefficients(self, rewards: Sequence[float]) -> List[float]:
        """c_t = −(r_t − b_t) / τ, updating the moving-average baseline when enabled."""
        cfg = self.bridge_config
        coeffs = []
        for t, r in enumerate(rewards):
            b = self.baseline[t] if cfg.baseline and self.baseline_seen[t] else 0.0
            coeffs.append(-(r - b) / cfg.tau)
        if cfg.baseline:
            for t, r in enumerate(rewards):
                if self.baseline_seen[t]:
                    self.baseline[t] = cfg.baseline_decay * self.baseline[t] + (1.0 - cfg.baseline_decay) * r
                else:
                    self.baseline[t] = r
                    self.baseline_seen[t] = True
        return coeffs

    # Updates

    def coaching_gradients(
        self,
        batch: CoachingBatch,
        generator: Seq2SeqModel,
        rng: np.random.Generator,
        reward_fn: Optional[RewardFn] = None,
        reinforce: bool = True,
        mle: bool = True,
    ) -> Tuple[CoachingLosses, Dict[str, np.ndarray]]:
        """Both gradient terms for a batch of (X, Y*) pairs without applying them."""
        if not batch:
            raise ValueError("coaching_gradients needs a nonempty batch")
        reward_fn = reward_fn or self.rewards
        leaves = self.leaves(True)
        n = len(batch)
        a_terms: List[Tensor] = []
        a_weights: List[float] = []
        b_terms: List[Tensor] = []
        scores = []
        with Tape():
            for source, reference in batch:
                if reinforce:
                    drawn = self.coaching_sample(reference, rng)
                    scores.append(similarity_score(drawn.tokens, reference))
                    sampled = drawn.sampled_length
                    if sampled:
                        coeffs = self.reinforce_coefficients(reward_fn(drawn.tokens, reference)[:sampled])
                        a_terms.extend(self.step_logprobs(reference, drawn.tokens, leaves)[:sampled])
                        a_weights.extend(c / n for c in coeffs)
                if mle:
                    proposal = generator.sample(source, rng, self.config.max_len)
                    if proposal.sampled_length:
                        b_terms.append(self.sampled_logprob(reference, proposal, leaves))
            loss_a = F.weighted_sum(a_terms, a_weights) if a_terms else None
            loss_b = F.weighted_sum(b_terms, [-1.0 / n] * len(b_terms)) if b_terms else None
            if loss_a is not None and loss_b is not None:
                loss = F.add(loss_a, loss_b)
            else:
                loss = loss_a if loss_a is not None else loss_b

        losses = CoachingLosses(
            reinforce=loss_a.item() if loss_a is not None else 0.0,
            mle=loss_b.item() if loss_b is not None else 0.0,
            mean_reward=float(np.mean(scores)) if scores else 0.0,
        )
        if loss is None:
            return losses, {name: np.zeros_like(value) for name, value in self.params.items()}
        if not math.isfinite(loss.item()):
            losses.skipped = True
            return losses, {}
        return losses, backward(loss).by_name(leaves)

    def coaching_update(
        self,
        batch: CoachingBatch,
        generator: Seq2SeqModel,
        optimizer: Adadelta,
        rng: np.random.Generator,
    ) -> CoachingLosses:
        """One bridge step; the generator is only sampled from."""
        losses, grads = self.coaching_gradients(batch, generator, rng)
        if losses.skipped:
            optimizer.state.skipped += 1
            logger.warning(f"Non-finite coaching loss {losses.total}; bridge update skipped")
            return losses
        self.apply(grads, optimizer)
        return losses

    def pretrain_step(
        self,
        pairs: Sequence[Tuple[Sequence[int], Sequence[int]]],
        optimizer: Adadelta,
        dropout_rng: Optional[np.random.Generator] = None,
    ) -> float:
        """MLE of the bridge on (Y*, Ŷ) pairs."""
        return self.weighted_update([(reference, [(target, 1.0)]) for reference, target in pairs], optimizer, dropout_rng)


@BridgeRegistry.register
class CoachingSampler(BridgeInterface):
    """Bridge-interface view of a :class:`CoachingBridge` network."""

    kind = BridgeKind.COACHING

    def __init__(self, config: BridgeConfig, network: Optional[CoachingBridge] = None, **_):
        super().__init__(config)
        if network is None:
            raise ConfigError("The coaching bridge needs its network")
        self.network = network

    def sample(self, reference: Sequence[int], rng: np.random.Generator) -> BridgeSample:
        result = self.network.coaching_sample(reference, rng)
        return BridgeSample(
            tokens=result.tokens, score=similarity_score(result.tokens, reference), truncated=result.truncated
        )

    def density(self, candidate: Sequence[int], reference: Sequence[int]) -> float:
        return self.network.law_probability(candidate, reference)
