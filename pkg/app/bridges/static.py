import math
from typing import List, Sequence

import numpy as np

from app.bridges.base import BridgeInterface, BridgeRegistry, BridgeSample
from app.core.exceptions import ConfigError
from app.reward.ngram import similarity_score
from app.schemas.config import BridgeConfig, BridgeKind
from app.schemas.tokens import with_eos


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ConfigError(f"Temperature must be positive, got {tau}")


def delta_sample(reference: Sequence[int]) -> List[int]:
    """The Dirac bridge: Y = Y*."""
    return list(reference)


def uniform_payoff_unnorm(candidate: Sequence[int], reference: Sequence[int], tau: float) -> float:
    """exp(S(Y, Y*) / τ)."""
    _check_tau(tau)
    return math.exp(similarity_score(candidate, reference) / tau)


def lm_payoff_unnorm(candidate: Sequence[int], reference: Sequence[int], tau: float, lm) -> float:
    """p_LM(Y) · exp(S(Y, Y*) / τ), combined in log space."""
    _check_tau(tau)
    return math.exp(lm.score(with_eos(candidate)) + similarity_score(candidate, reference) / tau)


@BridgeRegistry.register
class DeltaBridge(BridgeInterface):
    kind = BridgeKind.DELTA

    def __init__(self, config: BridgeConfig, **_):
        super().__init__(config)

    def sample(self, reference: Sequence[int], rng: np.random.Generator) -> BridgeSample:
        return BridgeSample(tokens=delta_sample(reference), m=0, score=similarity_score(reference, reference))

    def density(self, candidate: Sequence[int], reference: Sequence[int]) -> float:
        return 1.0 if list(candidate) == list(reference) else 0.0
