"""Parameter initialization and the GRU / linear building blocks shared by every network."""

from typing import Dict

import numpy as np

from app.numerics import functional as F
from app.numerics.tensor import Tensor

Params = Dict[str, np.ndarray]
Leaves = Dict[str, Tensor]

GRU_GATES = ("z", "r", "n")


def uniform_init(shape, rng: np.random.Generator, scale: float = 0.08) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def init_gru(params: Params, prefix: str, input_dim: int, hidden_dim: int, rng: np.random.Generator, scale: float) -> None:
    for gate in GRU_GATES:
        params[f"{prefix}.W{gate}"] = uniform_init((input_dim, hidden_dim), rng, scale)
        params[f"{prefix}.U{gate}"] = uniform_init((hidden_dim, hidden_dim), rng, scale)
        params[f"{prefix}.b{gate}"] = uniform_init((1, hidden_dim), rng, scale)


def init_linear(params: Params, prefix: str, in_dim: int, out_dim: int, rng: np.random.Generator, scale: float) -> None:
    params[f"{prefix}.W"] = uniform_init((in_dim, out_dim), rng, scale)
    params[f"{prefix}.b"] = uniform_init((1, out_dim), rng, scale)


def linear(x: Tensor, p: Leaves, prefix: str) -> Tensor:
    return F.add(F.matmul(x, p[f"{prefix}.W"]), p[f"{prefix}.b"])


def gru_cell(x: Tensor, h: Tensor, p: Leaves, prefix: str) -> Tensor:
    """h' = n + z * (h - n), the usual (1 - z) * n + z * h update."""
    z = F.sigmoid(F.add(F.add(F.matmul(x, p[f"{prefix}.Wz"]), F.matmul(h, p[f"{prefix}.Uz"])), p[f"{prefix}.bz"]))
    r = F.sigmoid(F.add(F.add(F.matmul(x, p[f"{prefix}.Wr"]), F.matmul(h, p[f"{prefix}.Ur"])), p[f"{prefix}.br"]))
    n = F.tanh(F.add(F.add(F.matmul(x, p[f"{prefix}.Wn"]), F.matmul(F.mul(r, h), p[f"{prefix}.Un"])), p[f"{prefix}.bn"]))
    return F.add(n, F.mul(z, F.sub(h, n)))


def as_leaves(params: Params, requires_grad: bool) -> Leaves:
    return {name: Tensor(value, requires_grad=requires_grad, name=name) for name, value in params.items()}
