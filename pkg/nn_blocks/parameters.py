"""
ParameterSet: named, seeded, trainable arrays with gradient slots.

Names are hierarchical (e.g. "scg.p3.rgb_refiner.dw.weight") and unique.
Layers keep only names and look their tensors up at call time, so an
optimizer step (or a finite-difference perturbation) that rebinds a name is seen
by the next forward pass.
"""

import logging
from collections.abc import MutableMapping
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from core.exceptions import ParameterError
from tensor_core.autodiff import DTYPE, Tensor
from tensor_core.exceptions import ShapeError
from tensor_core.ops import ConvSpec

logger = logging.getLogger(__name__)

# Gate-producing convolutions start with weights scaled down so that
# sigmoid gates sit near 0.5 and 2-way softmax weights near (0.5, 0.5).
GATE_INIT_SCALE = 0.1


class ParameterSet(MutableMapping):
    """Mapping name -> Tensor with one gradient slot per parameter."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._tensors: Dict[str, Tensor] = {}
        self._grads: Dict[str, np.ndarray] = {}

    # --- Mapping protocol ---

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ParameterError(f"Unknown parameter '{name}'") from None

    def __setitem__(self, name: str, value) -> None:
        if name not in self._tensors:
            raise ParameterError(f"Unknown parameter '{name}'; use register() to add parameters")
        array = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=DTYPE)
        current = self._tensors[name]
        if array.shape != current.shape:
            raise ShapeError(f"Parameter '{name}': shape {array.shape} does not match {current.shape}")
        self._tensors[name] = value if isinstance(value, Tensor) and value.requires_grad else Tensor(array, requires_grad=True, name=name)

    def __delitem__(self, name: str) -> None:
        raise TypeError("Parameters cannot be removed from a ParameterSet")

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    # --- Registration ---

    def register(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ParameterError(f"Parameter '{name}' is already registered")
        tensor = Tensor(array, requires_grad=True, name=name)
        self._tensors[name] = tensor
        self._grads[name] = np.zeros(tensor.shape, dtype=DTYPE)
        return tensor

    def register_conv(self, prefix: str, spec: ConvSpec, gate: bool = False) -> Tuple[str, str]:
        """Uniform(+-sqrt(1/fan_in)) weights (x0.1 for gate heads) and zero bias."""
        bound = np.sqrt(1.0 / spec.fan_in)
        weight = self._rng.uniform(-bound, bound, size=spec.weight_shape)
        if gate:
            weight = weight * GATE_INIT_SCALE
        weight_name, bias_name = f"{prefix}.weight", f"{prefix}.bias"
        self.register(weight_name, weight)
        self.register(bias_name, np.zeros(spec.out_channels))
        return weight_name, bias_name

    # --- Gradients ---

    def zero_grad(self) -> None:
        for name, grad in self._grads.items():
            self._grads[name] = np.zeros_like(grad)

    def accumulate(self, gradients: Mapping[Tensor, np.ndarray]) -> None:
        """Add tape gradients to the slots of the tensors currently bound to each name."""
        for name, tensor in self._tensors.items():
            grad = gradients.get(tensor)
            if grad is not None:
                self._grads[name] = self._grads[name] + grad

    def grad(self, name: str) -> np.ndarray:
        if name not in self._grads:
            raise ParameterError(f"Unknown parameter '{name}'")
        return self._grads[name]

    # --- Introspection ---

    def count(self) -> int:
        """Total number of scalar parameters."""
        return int(sum(t.size for t in self._tensors.values()))

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.numpy() for name, t in self._tensors.items()}

    def copy(self) -> 'ParameterSet':
        """Independent snapshot with the same names, values and seed."""
        clone = ParameterSet(self.seed)
        for name, tensor in self._tensors.items():
            clone.register(name, tensor.data)
        return clone

    def load_arrays(self, arrays: Mapping[str, np.ndarray], strict: bool = True) -> None:
        unknown = sorted(set(arrays) - set(self._tensors))
        if unknown:
            raise ParameterError(f"Unknown parameter name(s): {', '.join(unknown)}")
        if strict:
            missing = sorted(set(self._tensors) - set(arrays))
            if missing:
                raise ParameterError(f"Missing parameter(s): {', '.join(missing)}")
        for name, array in arrays.items():
            self[name] = array


def init_parameters(seed: int, layout: Optional[Mapping[str, Tuple[ConvSpec, bool]]] = None) -> ParameterSet:
    """
    Deterministic parameters for a layout of {prefix: (ConvSpec, is_gate)}.

    Registration follows the layout's iteration order, which fixes the
    sequence of random draws for a given seed.
    """
    params = ParameterSet(seed)
    for prefix, (spec, gate) in (layout or {}).items():
        params.register_conv(prefix, spec, gate=gate)
    logger.debug("Initialised %d parameter arrays (%d scalars) from seed %d", len(params), params.count(), seed)
    return params
