from pathlib import Path
from typing import List, Sequence, Union

from pydantic import BaseModel, Field
from sacrebleu.metrics import BLEU

from app.core.exceptions import CorpusError
from app.harness.corpus import read_lines

Tokens = Sequence[Union[str, int]]


class BleuResult(BaseModel):
    score: float = Field(..., description="Corpus BLEU in percent")
    precisions: List[float] = Field(..., description="Clipped n-gram precisions in percent, n = 1..4")
    brevity_penalty: float
    hyp_len: int
    ref_len: int


# Pre-tokenized input, no smoothing: any zero precision gives 0 and
# BP = exp(min(0, 1 - ref_len / hyp_len)).
_BLEU = BLEU(tokenize="none", smooth_method="none", force=True)


def _join(tokens: Tokens) -> str:
    return " ".join(str(t) for t in tokens)


def evaluate_bleu(hypotheses: Sequence[Tokens], references: Sequence[Tokens]) -> BleuResult:
    """Corpus-level BLEU of tokenized hypotheses against one reference each."""
    if len(hypotheses) != len(references):
        raise CorpusError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise CorpusError("Cannot score an empty corpus")
    result = _BLEU.corpus_score([_join(h) for h in hypotheses], [[_join(r) for r in references]])
    return BleuResult(
        score=float(result.score),
        precisions=[float(p) for p in result.precisions],
        brevity_penalty=float(result.bp),
        hyp_len=int(result.sys_len),
        ref_len=int(result.ref_len),
    )


def bleu_from_files(hyp_path: Union[str, Path], ref_path: Union[str, Path]) -> BleuResult:
    return evaluate_bleu(read_lines(hyp_path), read_lines(ref_path))
