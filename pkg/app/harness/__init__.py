from app.harness.bleu import BleuResult, bleu_from_files, evaluate_bleu
from app.harness.checkpoint import load_checkpoint, restore_rng, rng_state, save_checkpoint
from app.harness.corpus import PreparedData, load_prepared, prepare_data, read_parallel, synth_task
from app.harness.metrics import MetricsLogger, read_metrics
from app.harness.experiments import (
    FluencyComparison,
    LearningCurves,
    SystemReport,
    compare_bridges,
    learning_curves,
    tau_sweep,
)
from app.harness.training import (
    CoachingTrainer,
    StaticTrainer,
    TrainingSummary,
    corpus_bleu,
    decode_corpus,
    load_language_model,
    pretrain_lm,
    train,
    train_coaching,
    train_static,
)
from app.harness.vocab import Vocab, build_vocab

__all__ = [
    "BleuResult",
    "bleu_from_files",
    "evaluate_bleu",
    "load_checkpoint",
    "restore_rng",
    "rng_state",
    "save_checkpoint",
    "PreparedData",
    "load_prepared",
    "prepare_data",
    "read_parallel",
    "synth_task",
    "FluencyComparison",
    "LearningCurves",
    "SystemReport",
    "learning_curves",
    "compare_bridges",
    "tau_sweep",
    "MetricsLogger",
    "read_metrics",
    "CoachingTrainer",
    "StaticTrainer",
    "TrainingSummary",
    "corpus_bleu",
    "decode_corpus",
    "load_language_model",
    "pretrain_lm",
    "train",
    "train_coaching",
    "train_static",
    "Vocab",
    "build_vocab",
]
