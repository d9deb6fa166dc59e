"""
Attentive GRU encoder-decoder shared by the generator and the coaching bridge.

Source and target sequences are token lists ending with EOS; decoding starts
from BOS. Attention is additive: ``score_i = v · tanh(W_enc h_i + W_dec s)``.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import TokenRangeError
from app.models.layers import Leaves, Params, as_leaves, gru_cell, init_gru, init_linear, linear, uniform_init
from app.numerics import functional as F
from app.numerics.optim import Adadelta
from app.numerics.tensor import Tape, Tensor, backward, no_grad
from app.schemas.config import ModelConfig
from app.schemas.tokens import BOS, EOS, SampleResult

logger = logging.getLogger(__name__)

WeightedTargets = List[Tuple[Sequence[int], float]]
WeightedBatch = List[Tuple[Sequence[int], WeightedTargets]]


def draw_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from an (unnormalized) probability vector."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(probs) - 1))


class EncodedSource:
    """Encoder states plus the attention keys precomputed from them."""

    __slots__ = ("states", "matrix", "keys", "summary")

    def __init__(self, states: List[Tensor], matrix: Tensor, keys: Tensor, summary: Tensor):
        self.states = states
        self.matrix = matrix
        self.keys = keys
        self.summary = summary


class Hypothesis:
    __slots__ = ("tokens", "logprob", "state", "forced")

    def __init__(self, tokens: List[int], logprob: float, state: Optional[Tensor], forced: bool = False):
        self.tokens = tokens
        self.logprob = logprob
        self.state = state
        self.forced = forced


class Seq2SeqModel:
    """p(Y | X) as an attentive encoder-decoder with ancestral sampling and beam search."""

    def __init__(
        self,
        src_vocab_size: int,
        tgt_vocab_size: int,
        config: Optional[ModelConfig] = None,
        rng: Optional[np.random.Generator] = None,
        params: Optional[Params] = None,
    ):
        self.config = config or ModelConfig()
        self.src_vocab_size = src_vocab_size
        self.tgt_vocab_size = tgt_vocab_size
        self._constants: Optional[Leaves] = None
        if params is not None:
            self._params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
        else:
            self._params = self._init_params(rng if rng is not None else np.random.default_rng(0))

    # Parameters

    @property
    def enc_dim(self) -> int:
        return self.config.hidden_dim * (2 if self.config.bidirectional else 1)

    def _init_params(self, rng: np.random.Generator) -> Params:
        cfg = self.config
        E, H, s = cfg.embed_dim, cfg.hidden_dim, cfg.init_scale
        params: Params = {
            "src_embed": uniform_init((self.src_vocab_size, E), rng, s),
            "tgt_embed": uniform_init((self.tgt_vocab_size, E), rng, s),
        }
        init_gru(params, "enc", E, H, rng, s)
        if cfg.bidirectional:
            init_gru(params, "enc_bwd", E, H, rng, s)
        init_linear(params, "init", self.enc_dim, H, rng, s)
        params["att.W_enc"] = uniform_init((self.enc_dim, H), rng, s)
        params["att.W_dec"] = uniform_init((H, H), rng, s)
        params["att.v"] = uniform_init((H, 1), rng, s)
        init_gru(params, "dec", E + self.enc_dim, H, rng, s)
        init_linear(params, "out", H, self.tgt_vocab_size, rng, s)
        return params

    @property
    def params(self) -> Params:
        return self._params

    @params.setter
    def params(self, value: Params) -> None:
        self._params = value
        self._constants = None

    def leaves(self, requires_grad: bool = True) -> Leaves:
        if requires_grad:
            return as_leaves(self._params, True)
        if self._constants is None:
            self._constants = as_leaves(self._params, False)
        return self._constants

    def _check_source(self, source: Sequence[int]) -> None:
        if len(source) == 0:
            raise TokenRangeError("Cannot encode an empty source sequence")
        for tok in source:
            if not 0 <= tok < self.src_vocab_size:
                raise TokenRangeError(f"Source token {tok} outside vocabulary of size {self.src_vocab_size}")

    # Forward pieces

    def _run_gru(self, tokens: Sequence[int], p: Leaves, prefix: str) -> List[Tensor]:
        h = Tensor(np.zeros((1, self.config.hidden_dim)))
        states = []
        for tok in tokens:
            h = gru_cell(F.embedding(p["src_embed"], tok), h, p, prefix)
            states.append(h)
        return states

    def encode(self, source: Sequence[int], p: Optional[Leaves] = None) -> EncodedSource:
        """One state per source token; forward GRU unless configured bidirectional."""
        self._check_source(source)
        p = p if p is not None else self.leaves(False)
        forward = self._run_gru(source, p, "enc")
        if self.config.bidirectional:
            backward_states = self._run_gru(list(reversed(source)), p, "enc_bwd")[::-1]
            states = [F.concat([f, b]) for f, b in zip(forward, backward_states)]
            summary = F.concat([forward[-1], backward_states[0]])
        else:
            states = forward
            summary = forward[-1]
        matrix = states[0] if len(states) == 1 else F.concat(states, axis=0)
        keys = F.matmul(matrix, p["att.W_enc"])
        return EncodedSource(states, matrix, keys, summary)

    def initial_state(self, enc: EncodedSource, p: Optional[Leaves] = None) -> Tensor:
        p = p if p is not None else self.leaves(False)
        return F.tanh(linear(enc.summary, p, "init"))

    def attend(self, dec_state: Tensor, enc: EncodedSource, p: Leaves) -> Tuple[Tensor, Tensor]:
        """Attention weights (1, n) and context (1, enc_dim)."""
        query = F.matmul(dec_state, p["att.W_dec"])
        energy = F.tanh(F.add(enc.keys, query))
        scores = F.transpose(F.matmul(energy, p["att.v"]))
        weights = F.softmax(scores)
        return weights, F.matmul(weights, enc.matrix)

    def decode_step(
        self,
        prev_token: int,
        dec_state: Tensor,
        enc: EncodedSource,
        p: Optional[Leaves] = None,
        dropout_mask: Optional[Tensor] = None,
    ) -> Tuple[Tensor, Tensor]:
        """Log-probabilities (1, V) of the next token and the new decoder state."""
        if not 0 <= prev_token < self.tgt_vocab_size:
            raise TokenRangeError(f"Target token {prev_token} outside vocabulary of size {self.tgt_vocab_size}")
        p = p if p is not None else self.leaves(False)
        _, context = self.attend(dec_state, enc, p)
        x = F.concat([F.embedding(p["tgt_embed"], prev_token), context])
        state = gru_cell(x, dec_state, p, "dec")
        hidden = state if dropout_mask is None else F.mul(state, dropout_mask)
        return F.log_softmax(linear(hidden, p, "out")), state

    def _dropout_mask(self, rng: Optional[np.random.Generator]) -> Optional[Tensor]:
        rate = self.config.output_dropout
        if rng is None or rate <= 0.0:
            return None
        keep = rng.random((1, self.config.hidden_dim)) >= rate
        return Tensor(keep / (1.0 - rate))

    def step_logprobs(
        self,
        source: Sequence[int],
        target: Sequence[int],
        p: Optional[Leaves] = None,
        dropout_rng: Optional[np.random.Generator] = None,
    ) -> List[Tensor]:
        """log p(y_t | y_<t, X) for every position of a given target, EOS step included."""
        if len(target) == 0:
            raise TokenRangeError("Cannot score an empty target sequence")
        if target[-1] != EOS:
            raise TokenRangeError("Target sequence must end with EOS")
        p = p if p is not None else self.leaves(False)
        enc = self.encode(source, p)
        state = self.initial_state(enc, p)
        prev = BOS
        picks = []
        for tok in target:
            logp, state = self.decode_step(prev, state, enc, p, self._dropout_mask(dropout_rng))
            picks.append(F.pick(logp, tok))
            prev = tok
        return picks

    def sequence_logprob(
        self,
        source: Sequence[int],
        target: Sequence[int],
        p: Optional[Leaves] = None,
        dropout_rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        picks = self.step_logprobs(source, target, p, dropout_rng)
        return F.weighted_sum(picks, [1.0] * len(picks))

    def sampled_logprob(self, source: Sequence[int], result: SampleResult, p: Optional[Leaves] = None) -> Tensor:
        """Log-probability under the sampling law: a forced final EOS contributes nothing."""
        picks = self.step_logprobs(source, result.tokens, p)[: result.sampled_length]
        if not picks:
            return Tensor(np.zeros(()))
        return F.weighted_sum(picks, [1.0] * len(picks))

    # Decoding

    def sample(self, source: Sequence[int], rng: np.random.Generator, max_len: Optional[int] = None) -> SampleResult:
        """Ancestral sample; the last of ``max_len`` positions is a forced EOS."""
        max_len = max_len or self.config.max_len
        if max_len < 1:
            raise ValueError("max_len must be at least 1")
        with no_grad():
            enc = self.encode(source)
            state = self.initial_state(enc)
            prev, tokens, total = BOS, [], 0.0
            for t in range(max_len):
                logp, state = self.decode_step(prev, state, enc)
                row = logp.data[0]
                if t == max_len - 1:
                    return SampleResult(tokens=tokens + [EOS], logprob=total + float(row[EOS]), truncated=True)
                tok = draw_categorical(np.exp(row), rng)
                tokens.append(tok)
                total += float(row[tok])
                if tok == EOS:
                    return SampleResult(tokens=tokens, logprob=total, truncated=False)
                prev = tok
        raise AssertionError("unreachable")

    def beam_search(self, source: Sequence[int], beam: Optional[int] = None, max_len: Optional[int] = None) -> SampleResult:
        """Highest-scoring finished hypothesis under raw log-probability."""
        beam = beam or self.config.beam
        max_len = max_len or self.config.max_len
        if beam < 1:
            raise ValueError("beam must be at least 1")
        with no_grad():
            enc = self.encode(source)
            live = [Hypothesis([], 0.0, self.initial_state(enc))]
            finished: List[Hypothesis] = []
            for t in range(max_len):
                candidates: List[Tuple[float, List[int], Tensor]] = []
                for hyp in live:
                    prev = hyp.tokens[-1] if hyp.tokens else BOS
                    logp, state = self.decode_step(prev, hyp.state, enc)
                    row = logp.data[0]
                    if t == max_len - 1:
                        finished.append(Hypothesis(hyp.tokens + [EOS], hyp.logprob + float(row[EOS]), None, forced=True))
                        continue
                    for tok in np.argsort(-row, kind="stable")[: min(beam, len(row))]:
                        candidates.append((hyp.logprob + float(row[tok]), hyp.tokens + [int(tok)], state))
                candidates.sort(key=lambda c: (-c[0], c[1]))
                live = []
                for score, tokens, state in candidates[:beam]:
                    if tokens[-1] == EOS:
                        finished.append(Hypothesis(tokens, score, None))
                    else:
                        live.append(Hypothesis(tokens, score, state))
                # Scores only decrease, so no live hypothesis can overtake the best finished one.
                if not live or (finished and max(h.logprob for h in finished) >= max(h.logprob for h in live)):
                    break
        best = min(finished, key=lambda h: (-h.logprob, h.tokens))
        return SampleResult(tokens=best.tokens, logprob=best.logprob, truncated=best.forced)

    # Training

    def batch_loss(self, batch: WeightedBatch, p: Leaves, dropout_rng: Optional[np.random.Generator] = None) -> Tensor:
        """−(1/B) Σ_b Σ_k w_bk log p(Y_bk | X_b)."""
        terms, weights = [], []
        for source, targets in batch:
            for target, weight in targets:
                terms.append(self.sequence_logprob(source, target, p, dropout_rng))
                weights.append(-weight / len(batch))
        return F.weighted_sum(terms, weights)

    def gradients(
        self, batch: WeightedBatch, dropout_rng: Optional[np.random.Generator] = None
    ) -> Tuple[float, Dict[str, np.ndarray]]:
        if not batch:
            raise ValueError("Cannot compute gradients of an empty batch")
        leaves = self.leaves(True)
        with Tape():
            loss = self.batch_loss(batch, leaves, dropout_rng)
        value = loss.item()
        if not math.isfinite(value):
            return value, {}
        return value, backward(loss).by_name(leaves)

    def apply(self, grads: Dict[str, np.ndarray], optimizer: Adadelta) -> None:
        self.params = optimizer.step(self.params, grads)

    def weighted_update(
        self, batch: WeightedBatch, optimizer: Adadelta, dropout_rng: Optional[np.random.Generator] = None
    ) -> float:
        """Gradients of ``batch_loss`` then one optimizer step; non-finite losses skip the step."""
        loss, grads = self.gradients(batch, dropout_rng)
        if not math.isfinite(loss):
            optimizer.state.skipped += 1
            logger.warning(f"Non-finite loss {loss}; update skipped")
            return loss
        self.apply(grads, optimizer)
        return loss
