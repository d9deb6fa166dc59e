import logging
from collections import Counter
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.models.seq2seq import Seq2SeqModel, WeightedBatch
from app.numerics.optim import Adadelta

logger = logging.getLogger(__name__)

SampleBatch = List[Tuple[Sequence[int], List[Sequence[int]]]]


def collapse_samples(batch: SampleBatch) -> WeightedBatch:
    """Merge identical bridge samples of one source into weighted targets.

    Each distinct sample keeps its first-seen position and gets weight
    multiplicity / K, so K copies of one sequence carry weight exactly 1.0.
    """
    weighted: WeightedBatch = []
    for source, samples in batch:
        if not samples:
            raise ValueError("Every source needs at least one bridge sample")
        counts = Counter(tuple(s) for s in samples)
        seen, targets = set(), []
        for sample in samples:
            key = tuple(sample)
            if key in seen:
                continue
            seen.add(key)
            targets.append((list(key), counts[key] / len(samples)))
        weighted.append((source, targets))
    return weighted


class Generator(Seq2SeqModel):
    """The sequence prediction model p_θ(Y | X)."""

    def gbn_gradients(self, batch: SampleBatch, dropout_rng: Optional[np.random.Generator] = None):
        """Loss −(1/K) Σ_k log p_θ(Y^k | X) averaged over the batch, and its gradients."""
        return self.gradients(collapse_samples(batch), dropout_rng)

    def gbn_step(self, batch: SampleBatch, optimizer: Adadelta, dropout_rng: Optional[np.random.Generator] = None) -> float:
        """One update towards the bridge samples (Monte-Carlo ∇KL(p_η ‖ p_θ))."""
        if not batch:
            raise ValueError("gbn_step needs a nonempty batch")
        return self.weighted_update(collapse_samples(batch), optimizer, dropout_rng)

    def mle_step(
        self,
        batch: Sequence[Tuple[Sequence[int], Sequence[int]]],
        optimizer: Adadelta,
        dropout_rng: Optional[np.random.Generator] = None,
    ) -> float:
        """Maximum likelihood: a GBN step whose only sample is the ground truth."""
        return self.gbn_step([(source, [target]) for source, target in batch], optimizer, dropout_rng)
