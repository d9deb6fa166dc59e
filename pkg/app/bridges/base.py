"""
Bridge framework: the common interface of every p_η(Y | Y*) and a registry
keyed by bridge kind.
"""

from typing import Dict, List, Optional, Sequence, Type

import numpy as np
from pydantic import BaseModel, Field

from app.core.exceptions import ConfigError
from app.schemas.config import BridgeConfig, BridgeKind


class BridgeSample(BaseModel):
    """One target drawn from a bridge for a given reference."""

    tokens: List[int] = Field(..., description="Drawn sequence ending with EOS")
    m: Optional[int] = Field(default=None, description="Edit distance from the reference, when known")
    score: float = Field(..., description="S(Y, Y*)")
    truncated: bool = Field(default=False, description="EOS was forced at max_len")


class BridgeInterface:
    """Base interface for bridges."""

    kind: BridgeKind

    def __init__(self, config: BridgeConfig):
        self.config = config

    def sample(self, reference: Sequence[int], rng: np.random.Generator) -> BridgeSample:
        """Draw one Y ~ p_η(· | Y*)."""
        raise NotImplementedError("Bridge must implement sample")

    def density(self, candidate: Sequence[int], reference: Sequence[int]) -> float:
        """Unnormalized kernel, or the exact probability for network bridges."""
        raise NotImplementedError("Bridge must implement density")

    def draw(self, reference: Sequence[int], k: int, rng: np.random.Generator) -> List[BridgeSample]:
        """K independent samples for one reference."""
        if k < 1:
            raise ValueError("Need at least one bridge sample")
        return [self.sample(reference, rng) for _ in range(k)]


class BridgeRegistry:
    """Registry of bridge implementations."""

    _bridges: Dict[BridgeKind, Type[BridgeInterface]] = {}

    @classmethod
    def register(cls, bridge_class: Type[BridgeInterface]):
        """Register a bridge class under its ``kind``."""
        cls._bridges[bridge_class.kind] = bridge_class
        return bridge_class

    @classmethod
    def get_bridge(cls, kind: BridgeKind) -> Type[BridgeInterface]:
        bridge_class = cls._bridges.get(BridgeKind(kind))
        if bridge_class is None:
            raise ConfigError(f"No bridge registered for kind '{kind}'")
        return bridge_class

    @classmethod
    def list_bridges(cls) -> List[str]:
        return [kind.value for kind in cls._bridges]
