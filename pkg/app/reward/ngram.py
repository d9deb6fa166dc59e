"""
Surrogate n-gram similarity between a candidate and its reference.

``S(Y, Y*) = 0.4 N4 + 0.3 N3 + 0.2 N2 + 0.1 N1`` with ``N_n`` the clipped
n-gram precision of Y against Y*. The step-wise decomposition assigns each
emitted token a tiered local reward from {1.0, 0.6, 0.3, 0.1, 0.0}.
"""

from collections import Counter
from typing import Dict, List, Sequence, Tuple

from app.core.exceptions import ConfigError
from app.schemas.tokens import strip_eos

MAX_ORDER = 4
# Weights in tenths: S = (4 N4 + 3 N3 + 2 N2 + N1) / 10.
SCORE_WEIGHTS = {4: 4, 3: 3, 2: 2, 1: 1}
REWARD_TIERS = (1.0, 0.6, 0.3, 0.1)
TIER_VALUES = frozenset(REWARD_TIERS + (0.0,))

NGram = Tuple[int, ...]


class NGramTable:
    """Occurrence counts of every n-gram of order 1..4 within one sequence."""

    def __init__(self, tokens: Sequence[int]):
        self.length = len(tokens)
        self.counts: Dict[int, Counter] = {
            n: Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)) for n in range(1, MAX_ORDER + 1)
        }

    def count(self, gram: NGram) -> int:
        return self.counts[len(gram)].get(tuple(gram), 0)

    def total(self, n: int) -> int:
        return max(0, self.length - n + 1)


def _check_order(n: int) -> None:
    if not 1 <= n <= MAX_ORDER:
        raise ValueError(f"n-gram order must be in 1..{MAX_ORDER}, got {n}")


def ngram_precision(candidate: Sequence[int], reference: Sequence[int], n: int) -> float:
    """Σ_g min(count_Y(g), count_Y*(g)) / max(1, #n-grams in Y); 0 when Y is shorter than n."""
    _check_order(n)
    cand, ref = NGramTable(candidate), NGramTable(reference)
    if cand.total(n) == 0:
        return 0.0
    matched = sum(min(c, ref.counts[n].get(g, 0)) for g, c in cand.counts[n].items())
    return matched / max(1, cand.total(n))


def similarity_score(candidate: Sequence[int], reference: Sequence[int]) -> float:
    """S(Y, Y*) on content tokens; trailing EOS on either side is ignored."""
    cand, ref = strip_eos(candidate), strip_eos(reference)
    return sum(SCORE_WEIGHTS[n] * ngram_precision(cand, ref, n) for n in (4, 3, 2, 1)) / 10.0


def _tiers_for(t: int) -> List[Tuple[int, float]]:
    """(order, reward) pairs checked top-down at position t (1-based).

    Below t = 4 the highest available order t scores 0.6 and the lower
    orders continue down the ladder, so 1.0 needs a real 4-gram.
    """
    if t >= MAX_ORDER:
        return list(zip((4, 3, 2, 1), REWARD_TIERS))
    return list(zip(range(t, 0, -1), REWARD_TIERS[1:]))


def _stepwise(prefix_table: Dict[int, Counter], prefix: Sequence[int], t: int, ref: NGramTable) -> float:
    for n, reward in _tiers_for(t):
        gram = tuple(prefix[t - n : t])
        if prefix_table[n][gram] <= ref.count(gram):
            return reward
    return 0.0


def stepwise_reward(prefix: Sequence[int], reference: Sequence[int]) -> float:
    """Tiered local reward of the last token of ``prefix`` (y_{1:t}).

    The order-n condition holds when the n-gram ending at t occurs in
    y_{1:t} no more often than in Y*. Orders above t are unavailable; 1.0
    is reached only through a 4-gram condition.
    """
    t = len(prefix)
    if t < 1:
        raise ValueError("stepwise_reward needs a nonempty prefix")
    return _stepwise(NGramTable(prefix).counts, prefix, t, NGramTable(reference))


def step_rewards(candidate: Sequence[int], reference: Sequence[int]) -> List[float]:
    """Step rewards for every position of ``candidate``, EOS included."""
    ref = NGramTable(reference)
    counts: Dict[int, Counter] = {n: Counter() for n in range(1, MAX_ORDER + 1)}
    rewards = []
    for t in range(1, len(candidate) + 1):
        for n in range(1, min(t, MAX_ORDER) + 1):
            counts[n][tuple(candidate[t - n : t])] += 1
        rewards.append(_stepwise(counts, candidate, t, ref))
    return rewards


def step_gradient_coeffs(candidate: Sequence[int], reference: Sequence[int], tau: float) -> List[float]:
    """Per-step REINFORCE coefficients −s_t / τ."""
    if not tau > 0:
        raise ConfigError(f"Temperature must be positive, got {tau}")
    return [-r / tau for r in step_rewards(candidate, reference)]
