import math

import numpy as np
import pytest

from app.core.exceptions import CorpusError, TokenRangeError
from app.models.language_model import LanguageModel, UniformLanguageModel, lm_train
from app.numerics.optim import Adadelta
from app.schemas.config import ModelConfig
from app.schemas.tokens import BOS, EOS

VOCAB = 7
CORPUS = [[4, 5, EOS], [5, 4, 6, EOS], [4, 5, 6, EOS], [6, EOS]]


@pytest.fixture
def lm():
    config = ModelConfig(embed_dim=4, hidden_dim=5, init_scale=0.3)
    return LanguageModel(VOCAB, config, rng=np.random.default_rng(3))


class TestUniformLanguageModel:
    def test_score_is_length_times_log_v(self):
        assert UniformLanguageModel(VOCAB).score([4, 5, EOS]) == pytest.approx(-3 * math.log(VOCAB))

    def test_prefix_must_start_with_bos(self):
        lm = UniformLanguageModel(VOCAB)
        np.testing.assert_allclose(lm.step_dist([BOS]), np.full(VOCAB, 1 / VOCAB))
        with pytest.raises(TokenRangeError):
            lm.step_dist([4])


class TestLanguageModel:
    def test_step_dist_is_normalized(self, lm):
        probs = lm.step_dist([BOS, 4, 5])
        assert probs.shape == (VOCAB,)
        assert probs.sum() == pytest.approx(1.0)

    def test_score_chains_step_distributions(self, lm):
        """log p(Y) is the sum of next-token log-probabilities from BOS."""
        tokens = [4, 6, EOS]
        expected = sum(math.log(lm.step_dist([BOS] + tokens[:t])[tok]) for t, tok in enumerate(tokens))
        assert lm.score(tokens) == pytest.approx(expected, abs=1e-10)

    def test_scored_sequences_end_with_eos(self, lm):
        with pytest.raises(TokenRangeError):
            lm.score([4, 5])
        with pytest.raises(TokenRangeError):
            lm.score([])
        with pytest.raises(TokenRangeError):
            lm.score([VOCAB, EOS])

    def test_empty_corpus_perplexity(self, lm):
        with pytest.raises(CorpusError):
            lm.perplexity([])

    def test_training_lowers_perplexity(self, lm):
        before = lm.perplexity(CORPUS)
        history = lm_train(lm, CORPUS, Adadelta(lm.params), epochs=30, batch_size=2, heldout=CORPUS[:2])
        assert len(history) == 30
        assert history[-1].train_perplexity < before
        assert history[-1].heldout_perplexity is not None

    def test_training_needs_a_corpus(self, lm):
        with pytest.raises(CorpusError):
            lm_train(lm, [], Adadelta(lm.params), epochs=1)
