"""Reverse-mode automatic differentiation over dense numpy arrays.

Operations record their backward closures onto the innermost active
:class:`Tape`; with no tape active they are pure forward computations.  A tape
is consumed by its single ``backward`` call and must be rebuilt (fresh forward
pass) before differentiating again.

Compute is float32 by default; building parameters as float64 switches the
whole graph, which the finite-difference checks rely on.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """Dense array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations for one forward pass."""

    def __init__(self):
        self._nodes = []          # (output Tensor, backward closure)
        self._outputs = set()     # ids of tensors produced on this tape
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def record(self, out: Tensor, backward) -> None:
        self._nodes.append((out, backward))
        self._outputs.add(id(out))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every tensor reachable from ``loss``.

        Walks the tape once in reverse; raises if the tape was already
        consumed or if ``loss`` was not produced on it.
        """
        if self._consumed:
            raise ContractError("tape already consumed; run a fresh forward pass")
        if id(loss) not in self._outputs:
            raise ContractError("loss tensor is detached from this tape")
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for out, bwd in reversed(self._nodes):
            if out.grad is not None:
                bwd(out.grad)


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into ``t.grad`` (copying on first touch; g may be a view)."""
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def record_op(out: Tensor, inputs, backward) -> Tensor:
    """Mark ``out`` as differentiable w.r.t. ``inputs`` and record on the tape."""
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, backward)
    return out
