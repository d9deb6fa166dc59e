from typing import List, Optional, Sequence

from pydantic import BaseModel, Field

from app.core.exceptions import TokenRangeError

PAD = 0
BOS = 1
EOS = 2
UNK = 3
SPECIAL_TOKENS = ["<pad>", "<s>", "</s>", "<unk>"]
NUM_SPECIALS = len(SPECIAL_TOKENS)

TokenSeq = List[int]


def with_eos(tokens: Sequence[int]) -> TokenSeq:
    """Content tokens followed by exactly one EOS."""
    return strip_eos(tokens) + [EOS]


def strip_eos(tokens: Sequence[int]) -> TokenSeq:
    out = list(tokens)
    while out and out[-1] == EOS:
        out.pop()
    return out


def validate_tokens(tokens: Sequence[int], vocab_size: int, max_len: Optional[int] = None) -> None:
    """Range, PAD and length checks for a scored sequence."""
    if not tokens:
        raise TokenRangeError("Token sequence is empty")
    for tok in tokens:
        if not 0 <= tok < vocab_size:
            raise TokenRangeError(f"Token {tok} outside vocabulary of size {vocab_size}")
    if PAD in tokens:
        raise TokenRangeError("PAD may not appear inside a token sequence")
    if max_len is not None and len(tokens) > max_len:
        raise TokenRangeError(f"Sequence length {len(tokens)} exceeds max_len {max_len}")


class SampleResult(BaseModel):
    """One drawn sequence with its log-probability under the sampling model."""

    tokens: List[int] = Field(..., description="Emitted tokens ending with EOS")
    logprob: float = Field(..., description="Sum of the emitted tokens' log-probabilities")
    truncated: bool = Field(default=False, description="EOS was forced at max_len")

    @property
    def sampled_length(self) -> int:
        """Number of positions that were actually drawn (forced EOS excluded)."""
        return len(self.tokens) - 1 if self.truncated else len(self.tokens)
