import json
import math

import numpy as np
import pytest

from app.core.exceptions import CheckpointError, ConfigError, CorpusError, MissingCheckpointError
from app.harness.bleu import bleu_from_files, evaluate_bleu
from app.harness.checkpoint import (
    checkpoint_paths,
    load_checkpoint,
    prefixed,
    restore_rng,
    rng_state,
    save_checkpoint,
    select,
)
from app.harness.corpus import load_prepared, local_swap, prepare_data, read_parallel, synth_task, write_parallel
from app.harness.metrics import MetricsLogger, read_metrics
from app.harness.vocab import Vocab, build_vocab
from app.schemas.metrics import Phase
from app.schemas.tokens import EOS, SPECIAL_TOKENS, UNK


class TestVocab:
    def test_specials_first_then_frequency(self):
        vocab = build_vocab([["b", "a", "b"], ["c", "a", "b"]])
        assert vocab.itos[:4] == SPECIAL_TOKENS
        assert vocab.content_tokens == ["b", "a", "c"]

    def test_min_count_maps_to_unk(self):
        vocab = build_vocab([["a", "a", "z"]], min_count=2)
        assert "z" not in vocab
        assert vocab.encode(["a", "z"]) == [4, UNK, EOS]

    def test_decode_stops_at_eos(self):
        vocab = build_vocab([["a", "b"]])
        assert vocab.decode(vocab.encode(["a", "b"]) + [4]) == ["a", "b"]

    def test_save_and_load(self, tmp_path):
        vocab = build_vocab([["x", "y", "y"]])
        vocab.save(tmp_path / "v.vocab")
        assert Vocab.load(tmp_path / "v.vocab").itos == vocab.itos

    def test_invalid_vocabularies(self, tmp_path):
        with pytest.raises(CorpusError):
            Vocab(["a", "b"])
        with pytest.raises(CorpusError):
            Vocab(SPECIAL_TOKENS + ["a", "a"])
        with pytest.raises(CorpusError):
            build_vocab([])
        with pytest.raises(CorpusError):
            Vocab.load(tmp_path / "missing.vocab")


class TestSyntheticTasks:
    def test_deterministic(self):
        assert synth_task("cipher+localswap", 10, (3, 6), 20, 0.2, seed=4) == synth_task(
            "cipher+localswap", 10, (3, 6), 20, 0.2, seed=4
        )

    def test_copy_and_reverse(self):
        for src, tgt in synth_task("copy", 6, (2, 4), 10):
            assert src == tgt
            assert 2 <= len(src) <= 4
        for src, tgt in synth_task("reverse", 6, (2, 4), 10):
            assert tgt == src[::-1]

    def test_cipher_without_noise_is_a_bijection(self):
        mapping = {}
        for src, tgt in synth_task("cipher+localswap", 8, (3, 5), 40, noise=0.0):
            for s, t in zip(src, tgt):
                assert mapping.setdefault(s, t) == t
        assert len(set(mapping.values())) == len(mapping)

    def test_local_swap(self):
        rng = np.random.default_rng(0)
        assert local_swap(["a", "b", "c"], 1.0, rng) == ["b", "a", "c"]
        assert local_swap(["a", "b", "c"], 0.0, rng) == ["a", "b", "c"]

    def test_invalid_arguments(self):
        with pytest.raises(ConfigError):
            synth_task("shuffle", 5, (1, 2), 3)
        with pytest.raises(ConfigError):
            synth_task("copy", 5, (3, 2), 3)


class TestCorpus:
    def test_misaligned_files(self, tmp_path):
        (tmp_path / "a.src").write_text("x y\nz\n", encoding="utf-8")
        (tmp_path / "a.tgt").write_text("x y\n", encoding="utf-8")
        with pytest.raises(CorpusError):
            read_parallel(tmp_path / "a.src", tmp_path / "a.tgt")

    def test_length_filter(self, tmp_path):
        write_parallel(tmp_path, "train", [(["a"], ["b"]), (["a", "b", "c"], ["d"]), (["a"], ["b", "c"])])
        pairs = read_parallel(tmp_path / "train.src", tmp_path / "train.tgt", max_len=3)
        assert pairs == [(["a"], ["b"]), (["a"], ["b", "c"])]

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusError):
            read_parallel(tmp_path / "x.src", tmp_path / "x.tgt")

    def test_prepare_and_reload(self, experiment_config):
        data = prepare_data(experiment_config)
        assert len(data.train) == 12
        assert len(data.dev) == 4
        assert all(tgt[-1] == EOS and src[-1] == EOS for src, tgt in data.train)
        again = load_prepared(experiment_config)
        assert again.splits == data.splits
        assert again.tgt_vocab.itos == data.tgt_vocab.itos


class TestBleu:
    def test_identical_corpus(self):
        assert evaluate_bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d"]]).score == pytest.approx(100.0)

    def test_missing_four_gram_gives_zero(self):
        assert evaluate_bleu([["a", "b", "c", "d"]], [["a", "b", "c", "e"]]).score == 0.0

    def test_brevity_penalty(self):
        result = evaluate_bleu([["a", "b", "c", "d", "e"]], [["a", "b", "c", "d", "e", "f"]])
        assert result.brevity_penalty == pytest.approx(math.exp(-0.2))
        assert result.score == pytest.approx(100 * math.exp(-0.2))

    def test_integer_tokens(self):
        assert evaluate_bleu([[4, 5, 6, 7]], [[4, 5, 6, 7]]).score == pytest.approx(100.0)

    def test_mini_fixture(self, fixtures_dir):
        """Two sentences, one wrong token in the second."""
        result = bleu_from_files(fixtures_dir / "mini_hyp.txt", fixtures_dir / "mini_ref.txt")
        expected = float((fixtures_dir / "mini_bleu.txt").read_text().strip())
        assert round(result.score, 2) == expected

    def test_length_mismatch(self):
        with pytest.raises(CorpusError):
            evaluate_bleu([["a"]], [])
        with pytest.raises(CorpusError):
            evaluate_bleu([], [])


class TestMetricsLogger:
    def test_rows_round_trip(self, tmp_path):
        logger = MetricsLogger(tmp_path / "metrics.csv")
        logger.log(1, Phase.PRETRAIN, loss=2.5)
        logger.log(1, Phase.EVAL, dev_bleu=12.0)
        rows = read_metrics(tmp_path / "metrics.csv")
        assert [r.step for r in rows] == [1, 2]
        assert rows[0].loss == 2.5 and rows[0].dev_bleu is None
        assert rows[1].phase is Phase.EVAL

    def test_resume_truncates(self, tmp_path):
        path = tmp_path / "metrics.csv"
        logger = MetricsLogger(path)
        for i in range(5):
            logger.log(1, Phase.GENERATOR_STEP, loss=float(i))
        resumed = MetricsLogger(path, resume_step=3)
        assert resumed.step == 3
        resumed.log(2, Phase.GENERATOR_STEP, loss=9.0)
        assert [r.loss for r in read_metrics(path)] == [0.0, 1.0, 2.0, 9.0]

    def test_fresh_logger_overwrites(self, tmp_path):
        path = tmp_path / "metrics.csv"
        MetricsLogger(path).log(1, Phase.EVAL, dev_bleu=1.0)
        MetricsLogger(path)
        assert read_metrics(path) == []

    def test_bad_header(self, tmp_path):
        path = tmp_path / "metrics.csv"
        path.write_text("a,b\n", encoding="utf-8")
        with pytest.raises(CorpusError):
            read_metrics(path)


class TestCheckpoint:
    def test_save_and_load(self, tmp_path):
        tensors = prefixed({"w": np.array([[0.1, 0.2]])}, "generator")
        save_checkpoint(tmp_path, "last", tensors, {"step": 3})
        loaded, state = load_checkpoint(tmp_path, "last")
        assert state == {"step": 3}
        assert select(loaded, "generator")["w"].tobytes() == tensors["generator.w"].tobytes()
        assert not any(p.suffix == ".tmp" for p in tmp_path.iterdir())

    def test_missing(self, tmp_path):
        with pytest.raises(MissingCheckpointError):
            load_checkpoint(tmp_path, "best")

    def test_corrupt_state(self, tmp_path):
        save_checkpoint(tmp_path, "last", {"w": np.zeros(1)}, {})
        _, state_path = checkpoint_paths(tmp_path, "last")
        state_path.write_text("{not json", encoding="utf-8")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path, "last")
        state_path.write_text(json.dumps({"format_version": 99, "state": {}}), encoding="utf-8")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path, "last")

    def test_rng_state_continues_the_stream(self):
        rng = np.random.default_rng(5)
        rng.random(3)
        state = json.loads(json.dumps(rng_state(rng)))
        expected = rng.random(4)
        np.testing.assert_array_equal(restore_rng(state).random(4), expected)

    def test_invalid_rng_state(self):
        with pytest.raises(CheckpointError):
            restore_rng({"bit_generator": "nope"})
