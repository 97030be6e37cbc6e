"""
Dense float64 tensors with tape-based reverse-mode differentiation.
Operations only record onto a tape while one is active (`with Tape():`);
outside a tape they run as plain array arithmetic.
"""

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import NotScalar

Adjoint = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    Row-major float64 array with an optional gradient accumulator.

    Leaves created by the user (parameters, inputs) accumulate into `grad`
    across backward passes until `zero_grad` is called.
    """

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.is_leaf = True
        self.tape: Optional["Tape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        if self.size != 1:
            raise NotScalar(f"Tensor of shape {self.shape} is not a scalar")
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class TapeEntry:
    """One executed differentiable operation."""
    op: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    adjoint: Adjoint


_active_tape: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)


class Tape:
    """Ordered record of differentiable operations for one forward pass."""

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, op: str, output: Tensor, inputs: Tuple[Tensor, ...], adjoint: Adjoint) -> None:
        self.entries.append(TapeEntry(op, output, inputs, adjoint))


def current_tape() -> Optional[Tape]:
    return _active_tape.get()


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_result(op: str, values: np.ndarray, inputs: Tuple[Tensor, ...], adjoint: Adjoint) -> Tensor:
    """Wrap an op's output, recording it when a tape is active and any input needs grad."""
    tape = current_tape()
    out = Tensor(values)
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.is_leaf = False
        out.tape = tape
        tape.record(op, out, inputs, adjoint)
    return out


def backward(loss: Tensor) -> None:
    """
    Fill `grad` of every requires_grad leaf reachable from loss.

    Args:
        loss: Scalar tensor produced under a tape

    Raises:
        NotScalar: If loss holds more than one value
    """
    if loss.size != 1:
        raise NotScalar(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    seed = np.ones_like(loss.values)
    if loss.is_leaf:
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return

    pending = {id(loss): seed}
    for entry in reversed(loss.tape.entries):
        grad = pending.pop(id(entry.output), None)
        if grad is None:
            continue
        for tensor, contribution in zip(entry.inputs, entry.adjoint(grad)):
            if contribution is None or not tensor.requires_grad:
                continue
            if tensor.is_leaf:
                tensor.grad = (
                    np.array(contribution) if tensor.grad is None else tensor.grad + contribution
                )
            else:
                key = id(tensor)
                pending[key] = contribution if key not in pending else pending[key] + contribution
