"""
Parallel corpora: synthetic task generation, plain-text IO and the prepared
(id-encoded) train/dev/test splits.

Files are UTF-8, one whitespace-tokenized sentence per line, ``<split>.src``
aligned line by line with ``<split>.tgt``.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import ConfigError, CorpusError
from app.harness.vocab import Vocab, build_vocab
from app.schemas.config import ExperimentConfig, SynthKind, TaskKind

logger = logging.getLogger(__name__)

Pair = Tuple[List[str], List[str]]
IdPair = Tuple[List[int], List[int]]

SPLITS = ("train", "dev", "test")


def _symbol(i: int) -> str:
    return f"w{i}"


def local_swap(tokens: List[str], noise: float, rng: np.random.Generator) -> List[str]:
    """Swap each adjacent pair with probability ``noise``; swapped tokens are not revisited."""
    out = list(tokens)
    i = 0
    while i < len(out) - 1:
        if rng.random() < noise:
            out[i], out[i + 1] = out[i + 1], out[i]
            i += 2
        else:
            i += 1
    return out


def synth_task(
    kind: Union[str, SynthKind],
    vocab_size: int,
    len_range: Tuple[int, int],
    n_pairs: int,
    noise: float = 0.0,
    seed: int = 0,
) -> List[Pair]:
    """Deterministic synthetic parallel corpus.

    ``copy`` and ``reverse`` are what they say; ``cipher+localswap`` maps every
    symbol through a fixed random bijection and then applies local swaps.
    """
    try:
        kind = SynthKind(kind)
    except ValueError:
        raise ConfigError(f"Unknown synthetic task '{kind}'; expected one of {[k.value for k in SynthKind]}")
    lo, hi = len_range
    if not 1 <= lo <= hi:
        raise ConfigError(f"Invalid length range {len_range}")
    rng = np.random.default_rng(seed)
    cipher = rng.permutation(vocab_size)
    pairs: List[Pair] = []
    for _ in range(n_pairs):
        length = int(rng.integers(lo, hi + 1))
        source = [int(s) for s in rng.integers(0, vocab_size, size=length)]
        if kind is SynthKind.COPY:
            target = list(source)
        elif kind is SynthKind.REVERSE:
            target = source[::-1]
        else:
            target = [int(cipher[s]) for s in source]
        words_src = [_symbol(s) for s in source]
        words_tgt = [_symbol(t) for t in target]
        if kind is SynthKind.CIPHER_LOCALSWAP:
            words_tgt = local_swap(words_tgt, noise, rng)
        pairs.append((words_src, words_tgt))
    return pairs


def write_parallel(directory: Union[str, Path], split: str, pairs: Sequence[Pair]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{split}.src").write_text("".join(" ".join(s) + "\n" for s, _ in pairs), encoding="utf-8")
    (directory / f"{split}.tgt").write_text("".join(" ".join(t) + "\n" for _, t in pairs), encoding="utf-8")


def read_lines(path: Union[str, Path]) -> List[List[str]]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"Corpus file not found: {path}")
    return [line.split() for line in path.read_text(encoding="utf-8").splitlines()]


def read_parallel(src_path: Union[str, Path], tgt_path: Union[str, Path], max_len: Optional[int] = None) -> List[Pair]:
    """Aligned sentence pairs; empty lines and sentences longer than ``max_len`` − 1 tokens are dropped."""
    sources, targets = read_lines(src_path), read_lines(tgt_path)
    if len(sources) != len(targets):
        raise CorpusError(f"{src_path} has {len(sources)} lines but {tgt_path} has {len(targets)}")
    pairs = []
    for src, tgt in zip(sources, targets):
        if not src or not tgt:
            continue
        if max_len is not None and (len(src) + 1 > max_len or len(tgt) + 1 > max_len):
            continue
        pairs.append((src, tgt))
    dropped = len(sources) - len(pairs)
    if dropped:
        logger.info(f"Dropped {dropped} of {len(sources)} sentence pairs from {src_path} (empty or too long)")
    return pairs


class PreparedData:
    """Vocabularies and id-encoded splits (every sequence ends with EOS)."""

    def __init__(self, src_vocab: Vocab, tgt_vocab: Vocab, splits: Dict[str, List[IdPair]]):
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.splits = splits

    @property
    def train(self) -> List[IdPair]:
        return self.splits["train"]

    @property
    def dev(self) -> List[IdPair]:
        return self.splits["dev"]

    @property
    def test(self) -> List[IdPair]:
        return self.splits["test"]

    @classmethod
    def encode(cls, src_vocab: Vocab, tgt_vocab: Vocab, raw: Dict[str, List[Pair]]) -> "PreparedData":
        splits = {
            name: [(src_vocab.encode(s), tgt_vocab.encode(t)) for s, t in pairs] for name, pairs in raw.items()
        }
        return cls(src_vocab, tgt_vocab, splits)


def prepare_data(config: ExperimentConfig) -> PreparedData:
    """Materialize the task under ``task.data_dir`` and build both vocabularies from the training split."""
    task = config.task
    data_dir = Path(task.data_dir)
    if task.kind is TaskKind.SYNTHETIC:
        total = task.n_train + task.n_dev + task.n_test
        pairs = synth_task(task.synth_kind, task.vocab_size, (task.min_len, task.max_len), total, task.noise, task.seed)
        cuts = {"train": (0, task.n_train), "dev": (task.n_train, task.n_train + task.n_dev), "test": (task.n_train + task.n_dev, total)}
        for split, (start, end) in cuts.items():
            write_parallel(data_dir, split, pairs[start:end])
        logger.info(f"Wrote synthetic {task.synth_kind.value} task ({total} pairs) to {data_dir}")
    raw = {split: read_parallel(data_dir / f"{split}.src", data_dir / f"{split}.tgt", config.model.max_len) for split in SPLITS}
    if not raw["train"]:
        raise CorpusError(f"Training split under {data_dir} is empty")
    src_vocab = build_vocab((s for s, _ in raw["train"]), task.min_count)
    tgt_vocab = build_vocab((t for _, t in raw["train"]), task.min_count)
    src_vocab.save(data_dir / "src.vocab")
    tgt_vocab.save(data_dir / "tgt.vocab")
    logger.info(f"Vocabularies: {len(src_vocab)} source / {len(tgt_vocab)} target entries")
    return PreparedData.encode(src_vocab, tgt_vocab, raw)


def load_prepared(config: ExperimentConfig) -> PreparedData:
    """Read a prepared task, preparing it first when the vocabularies are missing."""
    data_dir = Path(config.task.data_dir)
    if not (data_dir / "src.vocab").exists() or not (data_dir / "tgt.vocab").exists():
        return prepare_data(config)
    raw = {split: read_parallel(data_dir / f"{split}.src", data_dir / f"{split}.tgt", config.model.max_len) for split in SPLITS}
    return PreparedData.encode(Vocab.load(data_dir / "src.vocab"), Vocab.load(data_dir / "tgt.vocab"), raw)
