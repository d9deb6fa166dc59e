from .generator import Generator, collapse_samples
from .language_model import LanguageModel, PerplexityRecord, UniformLanguageModel, lm_train
from .seq2seq import EncodedSource, Seq2SeqModel, draw_categorical

__all__ = [
    "Generator",
    "collapse_samples",
    "LanguageModel",
    "PerplexityRecord",
    "UniformLanguageModel",
    "lm_train",
    "EncodedSource",
    "Seq2SeqModel",
    "draw_categorical",
]
