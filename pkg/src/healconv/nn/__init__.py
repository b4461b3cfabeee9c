from .autodiff import Tape, Tensor
from . import functional
from . import layers
from .checkpoint import read_checkpoint, write_checkpoint
from .optim import SGD, sgd_step

__all__ = [
    "SGD",
    "Tape",
    "Tensor",
    "functional",
    "layers",
    "read_checkpoint",
    "sgd_step",
    "write_checkpoint",
]
