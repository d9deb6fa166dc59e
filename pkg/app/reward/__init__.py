from .ngram import (
    MAX_ORDER,
    SCORE_WEIGHTS,
    TIER_VALUES,
    NGramTable,
    ngram_precision,
    similarity_score,
    step_gradient_coeffs,
    step_rewards,
    stepwise_reward,
)

__all__ = [
    "MAX_ORDER",
    "SCORE_WEIGHTS",
    "TIER_VALUES",
    "NGramTable",
    "ngram_precision",
    "similarity_score",
    "step_gradient_coeffs",
    "step_rewards",
    "stepwise_reward",
]
