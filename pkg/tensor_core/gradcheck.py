"""
Finite-difference verification of backward rules.

A check binds the tensors under test in one or more mutable name->Tensor
mappings (a ParameterSet, or a plain dict for inputs). The loss closure
reads its operands from those mappings, so the checker can substitute a
perturbed copy of one array, re-run the forward pass without a tape and
restore the original afterwards.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, List, MutableMapping, Optional, Sequence

import numpy as np

from .autodiff import GradientTape, Tensor
from .ops import add, mul, sum_all

logger = logging.getLogger(__name__)

# Denominator floor of the relative error; losses are projected to O(1).
RELATIVE_ERROR_FLOOR = 1e-6


@dataclass
class GradCheckResult:
    component: str
    worst_error: float
    checked: int
    tolerance: float
    worst_binding: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.worst_error < self.tolerance


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), RELATIVE_ERROR_FLOOR)


def projection_loss(outputs: Sequence[Tensor], rng: np.random.Generator) -> Callable[[Sequence[Tensor]], Tensor]:
    """
    Fixed random linear functional sum_i <R_i, out_i>.

    R_i is drawn once (scaled by 1/sqrt(size)) and reused for every
    evaluation so the analytic and numeric passes see the same loss.
    """
    weights = [Tensor(rng.standard_normal(out.shape) / np.sqrt(out.size)) for out in outputs]

    def loss(values: Sequence[Tensor]) -> Tensor:
        total = None
        for value, weight in zip(values, weights):
            term = sum_all(mul(value, weight))
            total = term if total is None else add(total, term)
        return total

    return loss


def check_gradients(
    component: str,
    loss_fn: Callable[[], Tensor],
    bindings: Iterable[MutableMapping[str, Tensor]],
    *,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckResult:
    """
    Compare tape gradients with central differences for every element of
    every bound tensor that requires a gradient.

    `samples` limits the comparison to that many randomly chosen elements
    per tensor.
    """
    if samples is not None and samples < 1:
        raise ValueError(f"samples must be positive, got {samples}")
    rng = rng or np.random.default_rng(0)
    bindings = list(bindings)

    with GradientTape() as tape:
        loss = loss_fn()
    gradients = tape.gradient(loss)

    worst, worst_name, checked = 0.0, None, 0
    for mapping in bindings:
        for name in sorted(mapping.keys()):
            tensor = mapping[name]
            if not tensor.requires_grad:
                continue
            analytic = gradients.get(tensor)
            if analytic is None:
                analytic = np.zeros(tensor.shape)
            analytic = analytic.reshape(-1)
            base = tensor.numpy()
            if samples is None:
                positions = range(base.size)
            else:
                positions = rng.choice(base.size, size=min(samples, base.size), replace=False)
            try:
                for pos in positions:
                    pos = int(pos)
                    numeric = _central_difference(loss_fn, mapping, name, base, pos, step)
                    err = relative_error(float(analytic[pos]), numeric)
                    checked += 1
                    if err > worst:
                        worst, worst_name = err, f"{name}[{pos}]"
            finally:
                mapping[name] = tensor

    result = GradCheckResult(component, worst, checked, tolerance, worst_name)
    logger.info("gradcheck %s: worst relative error %.3e over %d elements", component, worst, checked)
    return result


def _central_difference(loss_fn, mapping, name, base: np.ndarray, pos: int, step: float) -> float:
    values: List[float] = []
    for delta in (step, -step):
        shifted = base.copy()
        shifted.reshape(-1)[pos] += delta
        mapping[name] = Tensor(shifted, requires_grad=True)
        values.append(loss_fn().item())
    return (values[0] - values[1]) / (2.0 * step)
