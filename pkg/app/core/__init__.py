from .config import Settings, get_settings, settings
from .exceptions import (
    CheckpointError,
    ConfigError,
    CorpusError,
    GBNError,
    MissingCheckpointError,
    NonFiniteError,
    OracleRefusedError,
    ShapeError,
    StaleTapeError,
    TapeError,
    TokenRangeError,
    TrainingDivergedError,
)

__all__ = [
    "Settings",
    "get_settings",
    "settings",
    "GBNError",
    "ShapeError",
    "TokenRangeError",
    "TapeError",
    "StaleTapeError",
    "NonFiniteError",
    "ConfigError",
    "CorpusError",
    "CheckpointError",
    "MissingCheckpointError",
    "OracleRefusedError",
    "TrainingDivergedError",
]
