from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

from app.core.exceptions import CorpusError
from app.schemas.tokens import EOS, NUM_SPECIALS, SPECIAL_TOKENS, UNK


class Vocab:
    """Token <-> index bijection with the four specials at indices 0..3."""

    def __init__(self, tokens: Sequence[str]):
        if list(tokens[:NUM_SPECIALS]) != SPECIAL_TOKENS:
            raise CorpusError("Vocabulary must start with the reserved special tokens")
        if len(set(tokens)) != len(tokens):
            raise CorpusError("Vocabulary contains duplicate tokens")
        self.itos: List[str] = list(tokens)
        self.stoi: Dict[str, int] = {tok: i for i, tok in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    @property
    def content_tokens(self) -> List[str]:
        return self.itos[NUM_SPECIALS:]

    def encode(self, words: Sequence[str], add_eos: bool = True) -> List[int]:
        ids = [self.stoi.get(w, UNK) for w in words]
        return ids + [EOS] if add_eos else ids

    def decode(self, ids: Sequence[int]) -> List[str]:
        """Tokens up to the first EOS."""
        words = []
        for i in ids:
            if i == EOS:
                break
            words.append(self.itos[i])
        return words

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocab":
        path = Path(path)
        if not path.exists():
            raise CorpusError(f"Vocabulary file not found: {path}")
        return cls([line for line in path.read_text(encoding="utf-8").splitlines() if line])


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 1) -> Vocab:
    """Frequency-sorted vocabulary, ties broken lexicographically.

    Tokens seen fewer than ``min_count`` times are left out and map to UNK.
    """
    counts: Counter = Counter()
    n_sentences = 0
    for sentence in corpus:
        n_sentences += 1
        counts.update(w for w in sentence if w not in SPECIAL_TOKENS)
    if n_sentences == 0:
        raise CorpusError("Cannot build a vocabulary from an empty corpus")
    kept = sorted((tok for tok, c in counts.items() if c >= min_count), key=lambda tok: (-counts[tok], tok))
    return Vocab(SPECIAL_TOKENS + kept)
