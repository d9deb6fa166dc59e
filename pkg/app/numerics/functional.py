"""
Differentiable primitives.

Every primitive is registered in :class:`PrimitiveRegistry` under its kind name
and returns ``(value, vjp)`` where ``vjp`` maps the output gradient to one
gradient per input. :func:`forward_primitive` dispatches by kind; the module
level helpers (``matmul``, ``softmax``...) are the everyday entry points.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ShapeError, TokenRangeError
from app.numerics.tensor import Tensor, active_tape

LOG_CLAMP = 1e-30

PrimitiveFn = Callable[..., Tuple[np.ndarray, Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]]]


class PrimitiveRegistry:
    """Registry of primitive kinds."""

    _primitives: Dict[str, PrimitiveFn] = {}

    @classmethod
    def register(cls, kind: str):
        def decorator(fn: PrimitiveFn) -> PrimitiveFn:
            cls._primitives[kind] = fn
            return fn

        return decorator

    @classmethod
    def get(cls, kind: str) -> PrimitiveFn:
        if kind not in cls._primitives:
            raise KeyError(f"Unknown primitive kind: {kind}")
        return cls._primitives[kind]

    @classmethod
    def kinds(cls) -> List[str]:
        return list(cls._primitives.keys())


def forward_primitive(kind: str, *inputs: Tensor, **options) -> Tensor:
    """Apply a primitive, recording it on the active tape when needed."""
    fn = PrimitiveRegistry.get(kind)
    value, vjp = fn(*[x.data for x in inputs], **options)
    tape = active_tape()
    track = tape is not None and any(x.requires_grad for x in inputs)
    out = Tensor(value, requires_grad=track)
    if track:
        tape.record(kind, tuple(inputs), out, vjp, saved=options or None)
    return out


def _shape_error(kind: str, *arrays: np.ndarray) -> ShapeError:
    shapes = ", ".join(str(a.shape) for a in arrays)
    return ShapeError(f"{kind}: incompatible shapes {shapes}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(kind: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error(kind, a, b)


@PrimitiveRegistry.register("matmul")
def _matmul(a: np.ndarray, b: np.ndarray):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a, b)
    return a @ b, lambda g: (g @ b.T, a.T @ g)


@PrimitiveRegistry.register("add")
def _add(a: np.ndarray, b: np.ndarray):
    _broadcast_check("add", a, b)
    return a + b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


@PrimitiveRegistry.register("sub")
def _sub(a: np.ndarray, b: np.ndarray):
    _broadcast_check("sub", a, b)
    return a - b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))


@PrimitiveRegistry.register("mul")
def _mul(a: np.ndarray, b: np.ndarray):
    _broadcast_check("mul", a, b)
    return a * b, lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))


@PrimitiveRegistry.register("sigmoid")
def _sigmoid(a: np.ndarray):
    # 1 / (1 + e^-x) without overflow for large |x|.
    out = np.exp(-np.logaddexp(0.0, -a))
    return out, lambda g: (g * out * (1.0 - out),)


@PrimitiveRegistry.register("tanh")
def _tanh(a: np.ndarray):
    out = np.tanh(a)
    return out, lambda g: (g * (1.0 - out * out),)


@PrimitiveRegistry.register("softmax")
def _softmax(a: np.ndarray):
    if a.ndim == 0:
        raise _shape_error("softmax", a)
    shifted = a - a.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    return out, lambda g: (out * (g - (g * out).sum(axis=-1, keepdims=True)),)


@PrimitiveRegistry.register("log_softmax")
def _log_softmax(a: np.ndarray):
    if a.ndim == 0:
        raise _shape_error("log_softmax", a)
    shifted = a - a.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)
    return out, lambda g: (g - probs * g.sum(axis=-1, keepdims=True),)


@PrimitiveRegistry.register("log")
def _log(a: np.ndarray):
    clamped = np.maximum(a, LOG_CLAMP)
    mask = a > LOG_CLAMP
    return np.log(clamped), lambda g: (np.where(mask, g / clamped, 0.0),)


@PrimitiveRegistry.register("embedding")
def _embedding(weight: np.ndarray, index=None):
    if weight.ndim != 2:
        raise _shape_error("embedding", weight)
    indices = np.atleast_1d(np.asarray(index, dtype=np.int64))
    if indices.size == 0 or indices.min() < 0 or indices.max() >= weight.shape[0]:
        raise TokenRangeError(f"embedding: token index {index} outside vocabulary of size {weight.shape[0]}")

    def vjp(g):
        grad = np.zeros_like(weight)
        np.add.at(grad, indices, g)
        return (grad,)

    return weight[indices], vjp


@PrimitiveRegistry.register("concat")
def _concat(*arrays: np.ndarray, axis: int = -1):
    ndims = {a.ndim for a in arrays}
    if len(ndims) != 1 or 0 in ndims:
        raise _shape_error("concat", *arrays)
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError:
        raise _shape_error("concat", *arrays)
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]
    return out, lambda g: tuple(np.split(g, bounds, axis=axis))


@PrimitiveRegistry.register("pick")
def _pick(a: np.ndarray, index=None):
    if a.ndim != 2 or a.shape[0] != 1:
        raise _shape_error("pick", a)
    if not 0 <= index < a.shape[1]:
        raise TokenRangeError(f"pick: index {index} outside width {a.shape[1]}")

    def vjp(g):
        grad = np.zeros_like(a)
        grad[0, index] = g
        return (grad,)

    return np.asarray(a[0, index]), vjp


@PrimitiveRegistry.register("sum")
def _sum(a: np.ndarray):
    return np.asarray(a.sum()), lambda g: (np.full_like(a, g),)


@PrimitiveRegistry.register("transpose")
def _transpose(a: np.ndarray):
    if a.ndim != 2:
        raise _shape_error("transpose", a)
    return a.T.copy(), lambda g: (g.T.copy(),)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("matmul", a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("mul", a, b)


def sigmoid(a: Tensor) -> Tensor:
    return forward_primitive("sigmoid", a)


def tanh(a: Tensor) -> Tensor:
    return forward_primitive("tanh", a)


def softmax(a: Tensor) -> Tensor:
    return forward_primitive("softmax", a)


def log_softmax(a: Tensor) -> Tensor:
    return forward_primitive("log_softmax", a)


def log(a: Tensor) -> Tensor:
    return forward_primitive("log", a)


def embedding(weight: Tensor, index) -> Tensor:
    """Rows of ``weight`` at ``index`` (int or sequence of ints) as an (n, E) tensor."""
    return forward_primitive("embedding", weight, index=index)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    return forward_primitive("concat", *tensors, axis=axis)


def pick(logprobs: Tensor, index: int) -> Tensor:
    """Entry ``index`` of a (1, V) log-probability row as a scalar."""
    return forward_primitive("pick", logprobs, index=int(index))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors the primitive kind
    return forward_primitive("sum", a)


def transpose(a: Tensor) -> Tensor:
    return forward_primitive("transpose", a)


def weighted_sum(terms: Sequence[Tensor], weights: Sequence[float]) -> Tensor:
    """Σ w_i · t_i over scalar tensors, accumulated left to right."""
    total: Optional[Tensor] = None
    for term, weight in zip(terms, weights):
        scaled = term if weight == 1.0 else mul(term, Tensor(weight))
        total = scaled if total is None else add(total, scaled)
    if total is None:
        raise ShapeError("weighted_sum: no terms")
    return total
