"""
Dense tensors and the define-by-run tape used for reverse-mode differentiation.

A fresh :class:`Tape` is opened for every training step. Primitive operations
record a :class:`TapeNode` on the active tape whenever one of their inputs
requires gradients; :func:`backward` then walks the recorded nodes in reverse
creation order, which is a reverse topological order of the graph.
"""

import threading
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ShapeError, StaleTapeError, TapeError

VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_local = threading.local()


class Tensor:
    """An immutable float64 array that may participate in differentiation."""

    __slots__ = ("data", "requires_grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node: Optional["TapeNode"] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{flag}{label})"

    # Operator sugar; the primitives live in app.numerics.functional.
    def __add__(self, other):
        from app.numerics import functional as F

        return F.add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        from app.numerics import functional as F

        return F.sub(self, _lift(other))

    def __rsub__(self, other):
        from app.numerics import functional as F

        return F.sub(_lift(other), self)

    def __mul__(self, other):
        from app.numerics import functional as F

        return F.mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        from app.numerics import functional as F

        return F.mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        from app.numerics import functional as F

        return F.matmul(self, _lift(other))


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class TapeNode:
    """One recorded primitive application."""

    __slots__ = ("kind", "parents", "saved", "vjp", "output", "grad", "tape")

    def __init__(self, kind: str, parents: Tuple[Tensor, ...], vjp: VJP, output: Tensor, tape: "Tape", saved=None):
        self.kind = kind
        self.parents = parents
        self.saved = saved
        self.vjp = vjp
        self.output = output
        self.grad: Optional[np.ndarray] = None
        self.tape = tape


class Tape:
    """Records primitive applications for a single backward pass.

    Usage::

        with Tape() as tape:
            loss = build_loss(leaves)
        grads = backward(loss)
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _stack().pop()

    def record(self, kind: str, parents: Tuple[Tensor, ...], output: Tensor, vjp: VJP, saved=None) -> None:
        if self.consumed:
            raise StaleTapeError(f"Cannot record '{kind}' on a tape that already ran backward")
        node = TapeNode(kind, parents, vjp, output, self, saved)
        output.node = node
        self.nodes.append(node)


class no_grad:
    """Context manager that suspends recording (sampling, decoding)."""

    def __enter__(self):
        _stack().append(None)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _stack().pop()


def _stack() -> List[Optional[Tape]]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


class Gradients:
    """Leaf gradients produced by :func:`backward`, keyed by tensor identity."""

    def __init__(self):
        self._grads: Dict[int, np.ndarray] = {}
        self._leaves: Dict[int, Tensor] = {}

    def accumulate(self, leaf: Tensor, grad: np.ndarray) -> None:
        key = id(leaf)
        if key in self._grads:
            self._grads[key] = self._grads[key] + grad
        else:
            self._grads[key] = grad
            self._leaves[key] = leaf

    def get(self, leaf: Tensor) -> np.ndarray:
        """Gradient of a leaf; zeros if the root does not depend on it."""
        grad = self._grads.get(id(leaf))
        return np.zeros_like(leaf.data) if grad is None else grad

    def __contains__(self, leaf: Tensor) -> bool:
        return id(leaf) in self._grads

    def by_name(self, leaves: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
        return {name: self.get(leaf) for name, leaf in leaves.items()}

    def leaves(self) -> Iterable[Tensor]:
        return self._leaves.values()


def backward(root: Tensor) -> Gradients:
    """Propagate d(root)/d(leaf) to every leaf that requires gradients.

    A tape can be consumed exactly once; calling backward again on a root
    recorded on the same tape raises :class:`StaleTapeError`.
    """
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    node = root.node
    if node is None:
        raise TapeError("Root was not produced on a tape (no input required gradients)")
    tape = node.tape
    if tape.consumed:
        raise StaleTapeError("backward already ran on this tape; open a fresh Tape")

    grads = Gradients()
    stop = tape.nodes.index(node)
    node.grad = np.ones_like(root.data)
    for current in reversed(tape.nodes[: stop + 1]):
        if current.grad is None:
            continue
        parent_grads = current.vjp(current.grad)
        for parent, grad in zip(current.parents, parent_grads):
            if grad is None or not parent.requires_grad:
                continue
            if grad.shape != parent.shape:
                raise ShapeError(
                    f"{current.kind}: gradient shape {grad.shape} does not match input shape {parent.shape}"
                )
            if parent.node is not None and parent.node.tape is tape:
                upstream = parent.node
                upstream.grad = grad if upstream.grad is None else upstream.grad + grad
            else:
                grads.accumulate(parent, grad)
        current.grad = None

    tape.consumed = True
    return grads
