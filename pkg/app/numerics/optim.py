import logging
from typing import Dict, Optional, Tuple

import numpy as np

from app.core.exceptions import ShapeError

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]


class AdadeltaState:
    """Running averages E[g²] and E[Δx²] for every parameter."""

    def __init__(self, params: Params, rho: float = 0.95, eps: float = 1e-6):
        self.rho = rho
        self.eps = eps
        self.square_avg: Params = {name: np.zeros_like(value) for name, value in params.items()}
        self.acc_delta: Params = {name: np.zeros_like(value) for name, value in params.items()}
        self.steps = 0
        self.skipped = 0

    def copy(self) -> "AdadeltaState":
        clone = AdadeltaState({}, self.rho, self.eps)
        clone.square_avg = {k: v.copy() for k, v in self.square_avg.items()}
        clone.acc_delta = {k: v.copy() for k, v in self.acc_delta.items()}
        clone.steps = self.steps
        clone.skipped = self.skipped
        return clone

    def tensors(self, prefix: str) -> Params:
        """Flat name -> array view used by checkpoints."""
        out = {f"{prefix}.square_avg.{k}": v for k, v in self.square_avg.items()}
        out.update({f"{prefix}.acc_delta.{k}": v for k, v in self.acc_delta.items()})
        return out

    def load_tensors(self, prefix: str, tensors: Params) -> None:
        for name in self.square_avg:
            self.square_avg[name] = np.array(tensors[f"{prefix}.square_avg.{name}"], dtype=np.float64)
            self.acc_delta[name] = np.array(tensors[f"{prefix}.acc_delta.{name}"], dtype=np.float64)


def adadelta_step(params: Params, grads: Params, state: AdadeltaState) -> Tuple[Params, AdadeltaState]:
    """One ADADELTA update; returns new parameter arrays and the updated state.

    Parameters without a gradient entry are treated as having zero gradient.
    A non-finite gradient anywhere skips the whole step.
    """
    for name, grad in grads.items():
        if name not in params:
            raise ShapeError(f"adadelta: gradient for unknown parameter '{name}'")
        if grad.shape != params[name].shape:
            raise ShapeError(f"adadelta: gradient {name} has shape {grad.shape}, parameter has {params[name].shape}")

    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        state.skipped += 1
        logger.warning(f"Non-finite gradient; ADADELTA step {state.steps + 1} skipped")
        return params, state

    rho, eps = state.rho, state.eps
    updated: Params = {}
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(value)
        square_avg = rho * state.square_avg[name] + (1.0 - rho) * grad * grad
        delta = -np.sqrt(state.acc_delta[name] + eps) / np.sqrt(square_avg + eps) * grad
        state.acc_delta[name] = rho * state.acc_delta[name] + (1.0 - rho) * delta * delta
        state.square_avg[name] = square_avg
        updated[name] = value + delta
    state.steps += 1
    return updated, state


class Adadelta:
    """Stateful wrapper around :func:`adadelta_step` for one parameter bundle."""

    def __init__(self, params: Params, rho: float = 0.95, eps: float = 1e-6):
        self.state = AdadeltaState(params, rho=rho, eps=eps)

    def step(self, params: Params, grads: Params) -> Params:
        new_params, self.state = adadelta_step(params, grads, self.state)
        return new_params

    @property
    def skipped(self) -> int:
        return self.state.skipped


def flatten(grads: Params, names: Optional[list] = None) -> np.ndarray:
    """Concatenate a gradient map into one vector in a stable name order."""
    keys = names if names is not None else sorted(grads)
    return np.concatenate([np.ravel(grads[k]) for k in keys]) if keys else np.zeros(0)
