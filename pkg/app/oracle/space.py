"""Enumerable output spaces and dense distributions over them."""

import itertools
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import OracleRefusedError
from app.schemas.tokens import EOS, NUM_SPECIALS

MAX_CONTENT_SYMBOLS = 8
MAX_CONTENT_LENGTH = 4
MAX_SAMPLER_VOCAB = 9
MAX_SEQUENCES = 4681

SeqKey = Tuple[int, ...]


class EnumSpace:
    """A complete, duplicate-free list of EOS-terminated sequences.

    ``forced[i]`` marks sequences whose final EOS is forced by the length cap
    rather than sampled.
    """

    def __init__(
        self,
        sequences: List[SeqKey],
        vocab_size: int,
        max_len: int,
        forced: Optional[List[bool]] = None,
        kind: str = "content",
    ):
        self.sequences = sequences
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.forced = forced if forced is not None else [False] * len(sequences)
        self.kind = kind
        self._index: Dict[SeqKey, int] = {seq: i for i, seq in enumerate(sequences)}
        if len(self._index) != len(sequences):
            raise OracleRefusedError("Enumeration contains duplicate sequences")

    @classmethod
    def content(cls, n_symbols: int, max_length: int) -> "EnumSpace":
        """All V^1 + ... + V^T content sequences over ids 4..4+V−1, each followed by EOS."""
        if not 1 <= n_symbols <= MAX_CONTENT_SYMBOLS or not 1 <= max_length <= MAX_CONTENT_LENGTH:
            raise OracleRefusedError(
                f"Content space V={n_symbols}, T={max_length} outside V<={MAX_CONTENT_SYMBOLS}, T<={MAX_CONTENT_LENGTH}"
            )
        symbols = range(NUM_SPECIALS, NUM_SPECIALS + n_symbols)
        sequences = [
            tuple(body) + (EOS,) for length in range(1, max_length + 1) for body in itertools.product(symbols, repeat=length)
        ]
        return cls(sequences, NUM_SPECIALS + n_symbols, max_length + 1, kind="content")

    @classmethod
    def sampler_law(cls, vocab_size: int, max_len: int) -> "EnumSpace":
        """Exact support of ancestral sampling with ``max_len`` positions over a full vocabulary."""
        if not EOS < vocab_size <= MAX_SAMPLER_VOCAB or max_len < 1:
            raise OracleRefusedError(f"Sampler space vocab={vocab_size} outside {EOS + 1}..{MAX_SAMPLER_VOCAB}")
        symbols = [tok for tok in range(vocab_size) if tok != EOS]
        size = sum(len(symbols) ** k for k in range(max_len))
        if size > MAX_SEQUENCES:
            raise OracleRefusedError(f"Sampler space of {size} sequences exceeds {MAX_SEQUENCES}")
        sequences, forced = [], []
        for k in range(max_len):
            for body in itertools.product(symbols, repeat=k):
                sequences.append(tuple(body) + (EOS,))
                forced.append(k == max_len - 1)
        return cls(sequences, vocab_size, max_len, forced, kind="sampler")

    def __len__(self) -> int:
        return len(self.sequences)

    def index(self, tokens: Sequence[int]) -> int:
        return self._index[tuple(tokens)]

    def __contains__(self, tokens: Sequence[int]) -> bool:
        return tuple(tokens) in self._index

    def permuted(self, rng: np.random.Generator) -> "EnumSpace":
        order = rng.permutation(len(self.sequences))
        return EnumSpace(
            [self.sequences[i] for i in order],
            self.vocab_size,
            self.max_len,
            [self.forced[i] for i in order],
            self.kind,
        )


class DenseDist:
    """A probability per enumerated sequence."""

    def __init__(self, space: EnumSpace, probs: np.ndarray, tol: float = 1e-9):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (len(space),):
            raise ValueError(f"Expected {len(space)} probabilities, got shape {probs.shape}")
        if np.any(probs < 0):
            raise ValueError("Probabilities must be nonnegative")
        total = math.fsum(probs)
        if abs(total - 1.0) > tol:
            raise ValueError(f"Probabilities sum to {total}, not 1")
        self.space = space
        self.probs = probs

    @classmethod
    def from_weights(cls, space: EnumSpace, weights: Sequence[float]) -> "DenseDist":
        weights = np.asarray(weights, dtype=np.float64)
        return cls(space, weights / math.fsum(weights))

    @classmethod
    def uniform(cls, space: EnumSpace) -> "DenseDist":
        return cls(space, np.full(len(space), 1.0 / len(space)))

    def prob(self, tokens: Sequence[int]) -> float:
        return float(self.probs[self.space.index(tokens)])

    def argmax(self) -> SeqKey:
        return self.space.sequences[int(np.argmax(self.probs))]

    def normalization_error(self) -> float:
        return abs(math.fsum(self.probs) - 1.0)

    def sample(self, rng: np.random.Generator) -> List[int]:
        return list(self.space.sequences[int(rng.choice(len(self.probs), p=self.probs))])
