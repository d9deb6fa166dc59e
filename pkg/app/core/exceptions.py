from typing import Optional


class GBNError(Exception):
    """Base class for every error raised by the framework."""

    default_code = "gbn_error"

    def __init__(self, message: str = "", code: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.code = code or self.default_code


class ShapeError(GBNError):
    default_code = "shape_mismatch"


class TokenRangeError(GBNError):
    default_code = "token_out_of_range"


class TapeError(GBNError):
    default_code = "tape_error"


class StaleTapeError(TapeError):
    default_code = "stale_tape"


class NonFiniteError(GBNError):
    default_code = "non_finite"


class ConfigError(GBNError):
    default_code = "invalid_config"


class CorpusError(GBNError):
    default_code = "invalid_corpus"


class CheckpointError(GBNError):
    default_code = "corrupt_checkpoint"


class MissingCheckpointError(CheckpointError):
    default_code = "missing_checkpoint"


class OracleRefusedError(GBNError):
    """Raised when an enumeration would exceed the exact-math caps."""

    default_code = "space_too_large"


class TrainingDivergedError(GBNError):
    default_code = "diverged"
