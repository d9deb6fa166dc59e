from .config import (
    COACHING_TAU_GRID,
    BridgeConfig,
    BridgeKind,
    ExperimentConfig,
    ModelConfig,
    OptimizerConfig,
    RewardMode,
    SynthKind,
    TaskConfig,
    TaskKind,
    TrainingConfig,
    build_config,
    dump_config,
    load_config,
    save_config,
)
from .metrics import METRIC_COLUMNS, MetricRow, Phase
from .tokens import BOS, EOS, NUM_SPECIALS, PAD, SPECIAL_TOKENS, UNK, SampleResult, TokenSeq

__all__ = [
    "COACHING_TAU_GRID",
    "BridgeConfig",
    "BridgeKind",
    "ExperimentConfig",
    "ModelConfig",
    "OptimizerConfig",
    "RewardMode",
    "SynthKind",
    "TaskConfig",
    "TaskKind",
    "TrainingConfig",
    "build_config",
    "dump_config",
    "load_config",
    "save_config",
    "METRIC_COLUMNS",
    "MetricRow",
    "Phase",
    "BOS",
    "EOS",
    "NUM_SPECIALS",
    "PAD",
    "SPECIAL_TOKENS",
    "UNK",
    "SampleResult",
    "TokenSeq",
]
