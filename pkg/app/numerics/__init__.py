from . import functional
from .functional import PrimitiveRegistry, forward_primitive
from .gradcheck import GradCheckReport, grad_check
from .optim import Adadelta, AdadeltaState, adadelta_step, flatten
from .serialization import read_tensors, write_tensors
from .tensor import Gradients, Tape, TapeNode, Tensor, active_tape, backward, no_grad

__all__ = [
    "functional",
    "PrimitiveRegistry",
    "forward_primitive",
    "GradCheckReport",
    "grad_check",
    "Adadelta",
    "AdadeltaState",
    "adadelta_step",
    "flatten",
    "read_tensors",
    "write_tensors",
    "Gradients",
    "Tape",
    "TapeNode",
    "Tensor",
    "active_tape",
    "backward",
    "no_grad",
]
