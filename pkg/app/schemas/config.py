"""
Experiment configuration and its flat ``key=value`` file form.

Nested sections are addressed with dotted keys::

    # uniform GBN on the cipher task
    bridge.kind=uniform
    bridge.tau=0.8
    training.batch_size=32
"""

import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from pydantic import BaseModel, Field, ValidationError, model_validator

from app.core.config import settings
from app.core.exceptions import ConfigError

COACHING_TAU_GRID = (0.8, 1.0, 1.2)


class BridgeKind(str, Enum):
    DELTA = "delta"
    UNIFORM = "uniform"
    LM = "lm"
    COACHING = "coaching"

    @property
    def is_static(self) -> bool:
        return self is not BridgeKind.COACHING


class RewardMode(str, Enum):
    """Coefficient attached to each REINFORCE step."""

    STEP = "step"
    SEQUENCE = "sequence"


class TaskKind(str, Enum):
    SYNTHETIC = "synthetic"
    CORPUS = "corpus"


class SynthKind(str, Enum):
    COPY = "copy"
    REVERSE = "reverse"
    CIPHER_LOCALSWAP = "cipher+localswap"


class ModelConfig(BaseModel):
    embed_dim: int = Field(default=32, gt=0, description="Embedding size")
    hidden_dim: int = Field(default=64, gt=0, description="GRU hidden size")
    max_len: int = Field(default=20, ge=1, description="Maximum emitted tokens including EOS")
    beam: int = Field(default=8, ge=1, description="Beam size for decoding")
    bidirectional: bool = Field(default=False, description="Bidirectional encoder")
    output_dropout: float = Field(default=0.0, ge=0.0, lt=1.0, description="Dropout on the output layer while training")
    init_scale: float = Field(default=0.08, gt=0.0, description="Uniform initialization half-width")


class BridgeConfig(BaseModel):
    kind: BridgeKind = Field(default=BridgeKind.DELTA, description="Bridge distribution")
    tau: float = Field(default=0.8, gt=0.0, description="Temperature dividing the similarity score")
    m_max: Optional[int] = Field(default=None, ge=0, description="Max edit distance; default ceil(0.25*len)")
    K: int = Field(default=5, ge=1, description="Bridge samples per source and step")
    alpha: Optional[float] = Field(default=None, description="Constraint weight; documentation only, the tau form is used")
    reward_mode: RewardMode = Field(default=RewardMode.STEP, description="Step-wise or sequence-level REINFORCE coefficients")
    baseline: bool = Field(default=False, description="Per-step moving-average REINFORCE baseline")
    baseline_decay: float = Field(default=0.9, ge=0.0, lt=1.0)

    def m_max_for(self, length: int, strict: bool = True) -> int:
        """Edit-distance cap for a reference of ``length`` content tokens.

        With ``strict`` an explicit cap above the length is an error;
        otherwise it is clipped.
        """
        if self.m_max is None:
            return min(length, math.ceil(0.25 * length))
        if self.m_max > length:
            if strict:
                raise ConfigError(f"m_max={self.m_max} exceeds reference length {length}")
            return length
        return self.m_max


class OptimizerConfig(BaseModel):
    rho: float = Field(default=0.95, gt=0.0, lt=1.0)
    eps: float = Field(default=1e-6, gt=0.0)


class TaskConfig(BaseModel):
    kind: TaskKind = TaskKind.SYNTHETIC
    synth_kind: SynthKind = SynthKind.CIPHER_LOCALSWAP
    data_dir: str = Field(default_factory=lambda: settings.data_root)
    vocab_size: int = Field(default=50, ge=2, description="Synthetic content symbols")
    min_len: int = Field(default=6, ge=1)
    max_len: int = Field(default=12, ge=1)
    n_train: int = Field(default=2000, ge=1)
    n_dev: int = Field(default=200, ge=1)
    n_test: int = Field(default=200, ge=1)
    noise: float = Field(default=0.15, ge=0.0, le=1.0, description="Adjacent swap probability")
    min_count: int = Field(default=1, ge=1, description="Vocabulary frequency threshold")
    seed: int = 7

    @model_validator(mode="after")
    def length_range(self) -> "TaskConfig":
        if self.min_len > self.max_len:
            raise ValueError(f"min_len {self.min_len} exceeds max_len {self.max_len}")
        return self


class TrainingConfig(BaseModel):
    epochs: int = Field(default=10, ge=1)
    batch_size: int = Field(default=32, ge=1)
    eval_every: int = Field(default=100, ge=1, description="Updates between dev evaluations")
    patience: int = Field(default=5, ge=1, description="Evaluations without dev-BLEU gain before stopping")
    max_steps: Optional[int] = Field(default=None, ge=1, description="Stop after this many metric rows")
    pretrain_epochs: int = Field(default=5, ge=1, description="Generator MLE epochs before coaching")
    bridge_pretrain_epochs: int = Field(default=3, ge=1)
    lm_epochs: int = Field(default=5, ge=1)
    eval_limit: Optional[int] = Field(default=None, ge=1, description="Dev sentences decoded per evaluation")


class ExperimentConfig(BaseModel):
    name: str = "gbn"
    seed: int = Field(default_factory=lambda: settings.default_seed)
    output_dir: str = Field(default_factory=lambda: f"{settings.output_root}/gbn")
    lm_checkpoint: Optional[str] = None
    task: TaskConfig = Field(default_factory=TaskConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    bridge: BridgeConfig = Field(default_factory=BridgeConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)


def _flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        elif value is not None:
            flat[name] = value
    return flat


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(config: ExperimentConfig) -> str:
    lines = [f"{key}={_format(value)}" for key, value in _flatten(config.model_dump(mode="json")).items()]
    return "\n".join(lines) + "\n"


def parse_pairs(lines: Iterable[str]) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"Line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def build_config(pairs: Dict[str, str], overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    """Validate dotted string pairs (file values, then overrides) into a config."""
    merged = dict(pairs)
    merged.update(overrides or {})
    nested: Dict[str, Any] = {}
    known = set(_flatten(ExperimentConfig().model_dump(mode="json")))
    optional = {"lm_checkpoint", "bridge.m_max", "bridge.alpha", "training.max_steps", "training.eval_limit"}
    for key, value in merged.items():
        if key not in known and key not in optional:
            raise ConfigError(f"Unknown configuration key: {key}")
        if value == "":
            continue
        node = nested
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    try:
        return ExperimentConfig.model_validate(nested)
    except ValidationError as e:
        errors = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"Invalid configuration: {errors}")


def load_config(path: Union[str, Path], overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    return build_config(parse_pairs(path.read_text(encoding="utf-8").splitlines()), overrides)


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(config), encoding="utf-8")


def parse_overrides(items: List[str]) -> Dict[str, str]:
    """``["bridge.tau=1.0", ...]`` -> dict, as given on the command line."""
    return parse_pairs(items)
