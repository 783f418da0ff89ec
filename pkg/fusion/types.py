from dataclasses import dataclass

from tensor_core.autodiff import Tensor, check_feature_map
from tensor_core.exceptions import ShapeError


@dataclass(frozen=True)
class ModalityPair:
    """Shape-matched RGB and IR feature maps at one pyramid level."""
    rgb: Tensor
    ir: Tensor

    def __post_init__(self):
        check_feature_map(self.rgb, 'ModalityPair.rgb')
        check_feature_map(self.ir, 'ModalityPair.ir')
        if self.rgb.shape != self.ir.shape:
            raise ShapeError(f"ModalityPair: rgb shape {self.rgb.shape} does not match ir shape {self.ir.shape}")

    @property
    def shape(self):
        return self.rgb.shape

    def swapped(self) -> 'ModalityPair':
        return ModalityPair(rgb=self.ir, ir=self.rgb)
