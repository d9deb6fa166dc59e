from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field

METRIC_COLUMNS = ["step", "epoch", "phase", "loss", "mean_reward", "dev_bleu"]


class Phase(str, Enum):
    PRETRAIN = "pretrain"
    BRIDGE_STEP = "bridge-step"
    GENERATOR_STEP = "generator-step"
    EVAL = "eval"


class MetricRow(BaseModel):
    """One logged training or evaluation measurement."""

    step: int = Field(..., ge=1, description="Row counter, strictly increasing within a run")
    epoch: int = Field(..., ge=0)
    phase: Phase
    loss: Optional[float] = None
    mean_reward: Optional[float] = Field(default=None, description="Mean S(Y, Y*) of the bridge samples")
    dev_bleu: Optional[float] = None

    def as_csv(self) -> list:
        return [
            str(self.step),
            str(self.epoch),
            self.phase.value,
            "" if self.loss is None else repr(self.loss),
            "" if self.mean_reward is None else repr(self.mean_reward),
            "" if self.dev_bleu is None else repr(self.dev_bleu),
        ]
