"""
Brute-force ground truth on enumerable spaces.

Every sum runs over the whole space through ``math.fsum``, which is exactly
rounded, so results do not depend on the enumeration order.
"""

import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.bridges.coaching import CoachingBridge, RewardFn
from app.bridges.static import lm_payoff_unnorm, uniform_payoff_unnorm
from app.core.exceptions import OracleRefusedError
from app.models.seq2seq import Seq2SeqModel
from app.numerics import functional as F
from app.numerics.tensor import Tape, Tensor, backward, no_grad
from app.oracle.space import DenseDist, EnumSpace
from app.reward.ngram import similarity_score
from app.schemas.tokens import BOS, EOS, SampleResult

Grads = Dict[str, np.ndarray]


def payoff_kernel(reference: Sequence[int], tau: float, space: EnumSpace, lm=None) -> np.ndarray:
    """exp(S/τ), times p_LM(Y) when ``lm`` is given, for every sequence."""
    if lm is None:
        return np.array([uniform_payoff_unnorm(seq, reference, tau) for seq in space.sequences])
    return np.array([lm_payoff_unnorm(seq, reference, tau, lm) for seq in space.sequences])


def partition_Z(reference: Sequence[int], tau: float, space: EnumSpace, lm=None) -> float:
    return math.fsum(payoff_kernel(reference, tau, space, lm))


def exact_payoff(reference: Sequence[int], tau: float, space: EnumSpace, lm=None) -> DenseDist:
    """The closed-form bridge kernel / Z."""
    kernel = payoff_kernel(reference, tau, space, lm)
    return DenseDist(space, kernel / math.fsum(kernel))


def exact_kl(p: DenseDist, q: DenseDist) -> float:
    """Σ p log(p / q) in nats."""
    if p.space is not q.space and p.space.sequences != q.space.sequences:
        raise ValueError("Distributions live on different spaces")
    terms = []
    for pi, qi in zip(p.probs, q.probs):
        if pi == 0.0:
            continue
        if qi == 0.0:
            raise ValueError("q must be positive wherever p is positive")
        terms.append(pi * math.log(pi / qi))
    return math.fsum(terms)


def uniform_constraint(space: EnumSpace) -> DenseDist:
    return DenseDist.uniform(space)


def lm_constraint(space: EnumSpace, lm) -> DenseDist:
    """p_LM restricted to the space and renormalized."""
    return DenseDist.from_weights(space, [math.exp(lm.score(seq)) for seq in space.sequences])


def scores(reference: Sequence[int], space: EnumSpace) -> np.ndarray:
    return np.array([similarity_score(seq, reference) for seq in space.sequences])


def exact_bridge_loss(q: DenseDist, reference: Sequence[int], tau: float, constraint: DenseDist) -> float:
    """E_q[−S / τ] + KL(q ‖ constraint)."""
    s = scores(reference, q.space)
    return math.fsum(q.probs * (-s / tau)) + exact_kl(q, constraint)


class PerturbationReport(BaseModel):
    optimum_loss: float
    min_perturbed_loss: float
    wins: int = Field(..., description="Perturbations with strictly higher loss than the optimum")
    trials: int

    @property
    def passed(self) -> bool:
        return self.wins == self.trials


def perturbation_sweep(
    optimum: DenseDist,
    reference: Sequence[int],
    tau: float,
    constraint: DenseDist,
    rng: np.random.Generator,
    trials: int = 100,
    scale: float = 0.5,
) -> PerturbationReport:
    """Compare the loss of ``optimum`` against randomly perturbed, renormalized copies."""
    best = exact_bridge_loss(optimum, reference, tau, constraint)
    losses = []
    for _ in range(trials):
        noise = scale * rng.random(len(optimum.probs)) * optimum.probs.max()
        perturbed = DenseDist.from_weights(optimum.space, optimum.probs + noise)
        losses.append(exact_bridge_loss(perturbed, reference, tau, constraint))
    return PerturbationReport(
        optimum_loss=best,
        min_perturbed_loss=min(losses),
        wins=sum(loss > best for loss in losses),
        trials=trials,
    )


# Network distributions


def _check_sampler_space(model: Seq2SeqModel, space: EnumSpace) -> None:
    if space.kind != "sampler":
        raise OracleRefusedError("Network distributions need a sampler-law space")
    if space.vocab_size != model.tgt_vocab_size or space.max_len != model.config.max_len:
        raise OracleRefusedError(
            f"Space (vocab {space.vocab_size}, max_len {space.max_len}) does not match the model "
            f"(vocab {model.tgt_vocab_size}, max_len {model.config.max_len})"
        )


def network_distribution(model: Seq2SeqModel, source: Sequence[int], space: EnumSpace) -> DenseDist:
    """Exact law of ``model.sample(source)`` over a sampler-law space, by a prefix-tree walk."""
    _check_sampler_space(model, space)
    probs = np.zeros(len(space))
    with no_grad():
        enc = model.encode(source)

        def walk(prefix: List[int], state: Tensor, logprob: float) -> None:
            if len(prefix) == space.max_len - 1:
                probs[space.index(prefix + [EOS])] = math.exp(logprob)
                return
            logp, new_state = model.decode_step(prefix[-1] if prefix else BOS, state, enc)
            row = logp.data[0]
            probs[space.index(prefix + [EOS])] = math.exp(logprob + row[EOS])
            for tok in range(space.vocab_size):
                if tok != EOS:
                    walk(prefix + [tok], new_state, logprob + float(row[tok]))

        walk([], model.initial_state(enc), 0.0)
    return DenseDist(space, probs)


def _law_result(space: EnumSpace, i: int) -> SampleResult:
    return SampleResult(tokens=list(space.sequences[i]), logprob=0.0, truncated=space.forced[i])


def _weighted_grad(model: Seq2SeqModel, build: Callable[[Dict[str, Tensor]], List[Tuple[Tensor, float]]]) -> Grads:
    leaves = model.leaves(True)
    with Tape():
        pairs = build(leaves)
        pairs = [(t, w) for t, w in pairs if w != 0.0]
        if not pairs:
            return {name: np.zeros_like(v) for name, v in model.params.items()}
        loss = F.weighted_sum([t for t, _ in pairs], [w for _, w in pairs])
    if loss.node is None:
        return {name: np.zeros_like(v) for name, v in model.params.items()}
    return backward(loss).by_name(leaves)


def exact_coaching_gradient(
    bridge: CoachingBridge,
    reference: Sequence[int],
    gen_dist: DenseDist,
    space: EnumSpace,
    tau: Optional[float] = None,
    reward_fn: Optional[RewardFn] = None,
) -> Tuple[Grads, Grads]:
    """Both expectation terms of one bridge update, by full enumeration.

    Returns (term_a, term_b): E_{p_η}[Σ_t c_t ∇log p_η(y_t)] with c_t the
    reward over −τ, and E_{p_θ}[∇ −log p_η(Y | Y*)].
    """
    _check_sampler_space(bridge, space)
    tau = tau if tau is not None else bridge.bridge_config.tau
    reward_fn = reward_fn or bridge.rewards
    p_eta = network_distribution(bridge, reference, space)

    def term_a(leaves):
        pairs = []
        for i, seq in enumerate(space.sequences):
            result = _law_result(space, i)
            n = result.sampled_length
            if n == 0 or p_eta.probs[i] == 0.0:
                continue
            coeffs = [-r / tau for r in reward_fn(list(seq), reference)[:n]]
            picks = bridge.step_logprobs(reference, list(seq), leaves)[:n]
            pairs.extend((pick, p_eta.probs[i] * c) for pick, c in zip(picks, coeffs))
        return pairs

    def term_b(leaves):
        pairs = []
        for i in range(len(space)):
            result = _law_result(space, i)
            if result.sampled_length == 0 or gen_dist.probs[i] == 0.0:
                continue
            pairs.append((bridge.sampled_logprob(reference, result, leaves), -gen_dist.probs[i]))
        return pairs

    return _weighted_grad(bridge, term_a), _weighted_grad(bridge, term_b)


def expected_reward(bridge: CoachingBridge, reference: Sequence[int], space: EnumSpace, tau: float) -> float:
    """E_{p_η}[−S(Y, Y*) / τ], the objective whose gradient the sequence-mode term (a) estimates."""
    p_eta = network_distribution(bridge, reference, space)
    return math.fsum(p_eta.probs * (-scores(reference, space) / tau))


def expected_gbn_gradient(generator: Seq2SeqModel, source: Sequence[int], bridge_dist: DenseDist) -> Grads:
    """E_{Y~p_η}[∇ −log p_θ(Y | X)], the exact expectation of a GBN step's gradient."""

    def build(leaves):
        return [
            (generator.sequence_logprob(source, list(seq), leaves), -p)
            for seq, p in zip(bridge_dist.space.sequences, bridge_dist.probs)
            if p > 0.0
        ]

    return _weighted_grad(generator, build)


def finite_difference_error(
    model: Seq2SeqModel,
    objective: Callable[[], float],
    analytic: Grads,
    rng: np.random.Generator,
    max_entries: int = 8,
    step: float = 1e-5,
) -> float:
    """Worst |g − g_fd| / max(1, |g_fd|) over a random subset of each parameter.

    ``objective`` reads the model's current parameters; each evaluation swaps in a
    shifted copy and the originals are put back afterwards.
    """
    original = model.params
    worst = 0.0
    try:
        for name, value in original.items():
            coords = np.arange(value.size)
            if value.size > max_entries:
                coords = np.sort(rng.choice(value.size, size=max_entries, replace=False))
            for coord in coords:
                idx = np.unravel_index(int(coord), value.shape)
                sides = []
                for sign in (1.0, -1.0):
                    shifted = value.copy()
                    shifted[idx] += sign * step
                    model.params = {**original, name: shifted}
                    sides.append(objective())
                fd = (sides[0] - sides[1]) / (2.0 * step)
                worst = max(worst, abs(float(analytic[name][idx]) - fd) / max(1.0, abs(fd)))
    finally:
        model.params = original
    return worst


def relative_error(estimate: Grads, exact: Grads) -> float:
    """‖estimate − exact‖ / max(‖exact‖, 1e-12) over all parameters."""
    names = sorted(exact)
    diff = math.sqrt(math.fsum(float(np.sum((estimate[k] - exact[k]) ** 2)) for k in names))
    norm = math.sqrt(math.fsum(float(np.sum(exact[k] ** 2)) for k in names))
    return diff / max(norm, 1e-12)
