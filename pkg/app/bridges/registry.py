from typing import Optional, Sequence

from app.bridges.base import BridgeInterface, BridgeRegistry
from app.bridges.coaching import CoachingBridge
from app.schemas.config import BridgeConfig, BridgeKind


def build_bridge(
    config: BridgeConfig,
    vocab_size: int,
    lm=None,
    network: Optional[CoachingBridge] = None,
    strict: bool = False,
) -> BridgeInterface:
    """Instantiate the registered bridge for ``config.kind``."""
    bridge_class = BridgeRegistry.get_bridge(config.kind)
    return bridge_class(config, vocab_size=vocab_size, lm=lm, network=network, strict=strict)


def bridge_density(
    kind: BridgeKind,
    candidate: Sequence[int],
    reference: Sequence[int],
    config: BridgeConfig,
    vocab_size: int = 0,
    lm=None,
    network: Optional[CoachingBridge] = None,
) -> float:
    """Unnormalized kernel for delta/uniform/lm; exact sampling-law probability for coaching."""
    bridge = build_bridge(config.model_copy(update={"kind": BridgeKind(kind)}), vocab_size, lm=lm, network=network)
    return bridge.density(candidate, reference)
