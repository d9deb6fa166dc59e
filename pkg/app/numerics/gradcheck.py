import math
from typing import Callable, Dict, Optional

import numpy as np
from pydantic import BaseModel, Field

from app.core.exceptions import NonFiniteError
from app.numerics.tensor import Tape, Tensor, backward, no_grad

GraphBuilder = Callable[[Dict[str, Tensor]], Tensor]


class GradCheckReport(BaseModel):
    """Result of comparing autodiff against central finite differences."""

    max_errors: Dict[str, float] = Field(default_factory=dict, description="Max relative error per parameter")
    tolerance: float = Field(..., description="Pass threshold")
    checked_entries: int = Field(default=0, description="Number of coordinates compared")

    @property
    def max_error(self) -> float:
        return max(self.max_errors.values()) if self.max_errors else 0.0

    @property
    def passed(self) -> bool:
        return all(err <= self.tolerance for err in self.max_errors.values())


def _evaluate(f: GraphBuilder, params: Dict[str, np.ndarray]) -> float:
    with no_grad():
        value = f({name: Tensor(v) for name, v in params.items()}).item()
    if not math.isfinite(value):
        raise NonFiniteError(f"grad_check: loss evaluated to {value}")
    return value


def grad_check(
    f: GraphBuilder,
    params: Dict[str, np.ndarray],
    fd_step: float = 1e-5,
    tol: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f`` with central finite differences.

    The per-coordinate error is |g_ad - g_fd| / max(1, |g_fd|). When
    ``max_entries`` is set, a seeded random subset of coordinates of each
    parameter is checked.
    """
    base = {name: np.array(v, dtype=np.float64) for name, v in params.items()}
    leaves = {name: Tensor(v, requires_grad=True, name=name) for name, v in base.items()}
    with Tape():
        loss = f(leaves)
    if not math.isfinite(loss.item()):
        raise NonFiniteError(f"grad_check: loss evaluated to {loss.item()}")
    grads = backward(loss).by_name(leaves)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tol)
    for name, value in base.items():
        flat_size = value.size
        coords = np.arange(flat_size)
        if max_entries is not None and flat_size > max_entries:
            coords = np.sort(rng.choice(flat_size, size=max_entries, replace=False))
        worst = 0.0
        for coord in coords:
            idx = np.unravel_index(int(coord), value.shape)
            original = value[idx]
            value[idx] = original + fd_step
            plus = _evaluate(f, base)
            value[idx] = original - fd_step
            minus = _evaluate(f, base)
            value[idx] = original
            fd = (plus - minus) / (2.0 * fd_step)
            err = abs(grads[name][idx] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
        report.max_errors[name] = float(worst)
        report.checked_entries += len(coords)
    return report
