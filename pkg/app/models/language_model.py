"""GRU language model over the target vocabulary, used by the LM bridge."""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.core.exceptions import CorpusError, TokenRangeError
from app.models.layers import Leaves, Params, as_leaves, gru_cell, init_gru, init_linear, linear, uniform_init
from app.numerics import functional as F
from app.numerics.optim import Adadelta
from app.numerics.tensor import Tape, Tensor, backward, no_grad
from app.schemas.config import ModelConfig
from app.schemas.tokens import BOS, EOS

logger = logging.getLogger(__name__)


class PerplexityRecord(BaseModel):
    epoch: int = Field(..., ge=1)
    train_perplexity: float
    heldout_perplexity: Optional[float] = None


class UniformLanguageModel:
    """Analytic LM assigning 1/V to every token at every step."""

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def step_dist(self, prefix: Sequence[int]) -> np.ndarray:
        if not prefix or prefix[0] != BOS:
            raise TokenRangeError("LM prefix must start with BOS")
        return np.full(self.vocab_size, 1.0 / self.vocab_size)

    def score(self, tokens: Sequence[int]) -> float:
        if not tokens:
            raise TokenRangeError("Cannot score an empty sequence")
        return -len(tokens) * math.log(self.vocab_size)


class LanguageModel:
    """p_LM(Y) = Π_t p(y_t | y_<t), decoded from BOS, EOS step included."""

    def __init__(
        self,
        vocab_size: int,
        config: Optional[ModelConfig] = None,
        rng: Optional[np.random.Generator] = None,
        params: Optional[Params] = None,
    ):
        self.config = config or ModelConfig()
        self.vocab_size = vocab_size
        self._constants: Optional[Leaves] = None
        if params is not None:
            self._params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            E, H, s = self.config.embed_dim, self.config.hidden_dim, self.config.init_scale
            self._params = {"embed": uniform_init((vocab_size, E), rng, s)}
            init_gru(self._params, "gru", E, H, rng, s)
            init_linear(self._params, "out", H, vocab_size, rng, s)

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

    def initial_state(self) -> Tensor:
        return Tensor(np.zeros((1, self.config.hidden_dim)))

    def step(self, token: int, state: Tensor, p: Optional[Leaves] = None) -> Tuple[Tensor, Tensor]:
        if not 0 <= token < self.vocab_size:
            raise TokenRangeError(f"Token {token} outside vocabulary of size {self.vocab_size}")
        p = p if p is not None else self.leaves(False)
        state = gru_cell(F.embedding(p["embed"], token), state, p, "gru")
        return F.log_softmax(linear(state, p, "out")), state

    def step_dist(self, prefix: Sequence[int]) -> np.ndarray:
        """Next-token distribution after ``prefix`` (which starts with BOS)."""
        if not prefix or prefix[0] != BOS:
            raise TokenRangeError("LM prefix must start with BOS")
        with no_grad():
            state = self.initial_state()
            for tok in prefix:
                logp, state = self.step(tok, state)
        probs = np.exp(logp.data[0])
        return probs / probs.sum()

    def seq_logprob(self, tokens: Sequence[int], p: Optional[Leaves] = None) -> Tensor:
        if not tokens:
            raise TokenRangeError("Cannot score an empty sequence")
        if tokens[-1] != EOS:
            raise TokenRangeError("LM-scored sequences must end with EOS")
        p = p if p is not None else self.leaves(False)
        state = self.initial_state()
        prev, picks = BOS, []
        for tok in tokens:
            logp, state = self.step(prev, state, p)
            picks.append(F.pick(logp, tok))
            prev = tok
        return F.weighted_sum(picks, [1.0] * len(picks))

    def score(self, tokens: Sequence[int]) -> float:
        with no_grad():
            return self.seq_logprob(tokens).item()

    def perplexity(self, corpus: Sequence[Sequence[int]]) -> float:
        """exp(mean negative log-likelihood per token)."""
        if not corpus:
            raise CorpusError("Cannot compute perplexity of an empty corpus")
        nll = -math.fsum(self.score(seq) for seq in corpus)
        return math.exp(nll / sum(len(seq) for seq in corpus))

    def train_step(self, batch: Sequence[Sequence[int]], optimizer: Adadelta) -> float:
        """Mean per-token cross-entropy over ``batch`` and one ADADELTA update."""
        leaves = self.leaves(True)
        n_tokens = sum(len(seq) for seq in batch)
        with Tape():
            terms = [self.seq_logprob(seq, leaves) for seq in batch]
            loss = F.weighted_sum(terms, [-1.0 / n_tokens] * len(terms))
        value = loss.item()
        if not math.isfinite(value):
            optimizer.state.skipped += 1
            logger.warning(f"Non-finite LM loss {value}; update skipped")
            return value
        self.params = optimizer.step(self.params, backward(loss).by_name(leaves))
        return value


def lm_train(
    lm: LanguageModel,
    corpus: Sequence[Sequence[int]],
    optimizer: Adadelta,
    epochs: int,
    batch_size: int = 32,
    heldout: Optional[Sequence[Sequence[int]]] = None,
    rng: Optional[np.random.Generator] = None,
) -> List[PerplexityRecord]:
    """Next-token cross-entropy training with per-epoch perplexity logging."""
    if not corpus:
        raise CorpusError("Cannot train a language model on an empty corpus")
    rng = rng if rng is not None else np.random.default_rng(0)
    history: List[PerplexityRecord] = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(corpus))
        for start in range(0, len(order), batch_size):
            lm.train_step([corpus[i] for i in order[start : start + batch_size]], optimizer)
        record = PerplexityRecord(
            epoch=epoch,
            train_perplexity=lm.perplexity(corpus),
            heldout_perplexity=lm.perplexity(heldout) if heldout else None,
        )
        logger.info(
            f"LM epoch {epoch}: train ppl {record.train_perplexity:.3f}"
            + (f", held-out ppl {record.heldout_perplexity:.3f}" if heldout else "")
        )
        history.append(record)
    return history
