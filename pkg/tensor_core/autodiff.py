"""
Reverse-mode differentiation over immutable float64 tensors.

Operations in `tensor_core.ops` call `record()`. When a GradientTape is
active and at least one operand requires a gradient, the operation is
appended to the tape together with its vector-Jacobian product. Replaying
the tape in reverse order from a scalar loss yields one gradient array per
leaf tensor that requires a gradient.

Tapes are tracked per execution context (contextvars), so independent
forward/backward passes may run on separate threads.
"""

import logging
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ShapeError, TapeError

logger = logging.getLogger(__name__)

DTYPE = np.float64
SCALAR_SHAPE = (1, 1, 1, 1)

VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    Immutable float64 array that may take part in a recorded computation.

    The wrapped array is marked read-only; operations always allocate new
    outputs, so tensors can be shared between threads without copying.
    Identity (not value) is used for hashing, which lets gradients be keyed
    by the tensor object itself.
    """

    __slots__ = ('_data', 'requires_grad', 'name', '__weakref__')

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=DTYPE)
        array.setflags(write=False)
        self._data = array
        self.requires_grad = bool(requires_grad)
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False) -> 'Tensor':
        """Adopt a freshly computed array without copying it."""
        tensor = cls.__new__(cls)
        if array.dtype != DTYPE:
            array = array.astype(DTYPE)
        array.setflags(write=False)
        tensor._data = array
        tensor.requires_grad = requires_grad
        tensor.name = None
        return tensor

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        return Tensor._wrap(self._data, requires_grad=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


def feature_map(data, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    """Build a FeatureMap: a rank-4 (N, C, H, W) tensor with every extent >= 1."""
    tensor = Tensor(data, requires_grad=requires_grad, name=name)
    check_feature_map(tensor, 'feature_map')
    return tensor


def check_feature_map(x: Tensor, op: str) -> None:
    if x.ndim != 4 or min(x.shape) < 1:
        raise ShapeError(f"{op}: expected a (N, C, H, W) feature map, got shape {x.shape}")


@dataclass(frozen=True)
class TapeEntry:
    """One executed operation: operands, output and its vector-Jacobian product."""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: VJP


_ACTIVE_TAPE: ContextVar[Optional['GradientTape']] = ContextVar('pacgnet_active_tape', default=None)


class GradientTape:
    """
    Ordered record of executed operations.

    Usage:
        with GradientTape() as tape:
            loss = ...
        grads = tape.gradient(loss)
        grads[weight]  # ndarray with weight.shape
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self._token = None

    def __enter__(self) -> 'GradientTape':
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def record(self, entry: TapeEntry) -> None:
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def leaves(self) -> List[Tensor]:
        """Tensors requiring gradients that enter the tape without being produced on it."""
        produced = {id(entry.output) for entry in self.entries}
        seen = set()
        leaves = []
        for entry in self.entries:
            for tensor in entry.inputs:
                key = id(tensor)
                if tensor.requires_grad and key not in produced and key not in seen:
                    seen.add(key)
                    leaves.append(tensor)
        return leaves

    def gradient(self, loss: Tensor) -> Dict[Tensor, np.ndarray]:
        """
        Replay the tape backwards from a scalar loss.

        Returns a mapping from every leaf tensor to its gradient; leaves the
        loss does not depend on receive zeros of their own shape.
        """
        if loss.shape != SCALAR_SHAPE:
            raise ShapeError(f"backward: loss must have shape {SCALAR_SHAPE}, got {loss.shape}")
        if not loss.requires_grad or not any(entry.output is loss for entry in self.entries):
            raise TapeError("backward: the loss was not produced through this tape")

        pending: Dict[int, np.ndarray] = {id(loss): np.ones(SCALAR_SHAPE, dtype=DTYPE)}
        for entry in reversed(self.entries):
            upstream = pending.pop(id(entry.output), None)
            if upstream is None:
                continue
            for tensor, grad in zip(entry.inputs, entry.vjp(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                if grad.shape != tensor.shape:
                    raise ShapeError(
                        f"backward rule of '{entry.op}' returned shape {grad.shape} "
                        f"for an operand of shape {tensor.shape}"
                    )
                key = id(tensor)
                pending[key] = pending[key] + grad if key in pending else grad

        gradients = {}
        for leaf in self.leaves():
            grad = pending.get(id(leaf))
            gradients[leaf] = grad if grad is not None else np.zeros(leaf.shape, dtype=DTYPE)
        logger.debug("Backward pass over %d tape entries produced %d gradients", len(self.entries), len(gradients))
        return gradients


def active_tape() -> Optional[GradientTape]:
    return _ACTIVE_TAPE.get()


def record(op: str, inputs: Sequence[Tensor], value: np.ndarray, vjp: VJP) -> Tensor:
    """Wrap an op result and append it to the active tape when a gradient can flow."""
    tape = _ACTIVE_TAPE.get()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    output = Tensor._wrap(value, requires_grad=tracked)
    if tracked:
        tape.record(TapeEntry(op=op, inputs=tuple(inputs), output=output, vjp=vjp))
    return output


def backward(loss: Tensor, tape: Optional[GradientTape] = None) -> Dict[Tensor, np.ndarray]:
    """Gradients of `loss` w.r.t. every leaf of `tape` (default: the active tape)."""
    tape = tape or _ACTIVE_TAPE.get()
    if tape is None:
        raise TapeError("backward: no gradient tape is active")
    return tape.gradient(loss)
