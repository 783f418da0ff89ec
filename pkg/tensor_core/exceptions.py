from core.exceptions import PacgError


class ShapeError(PacgError, ValueError):
    """An operand shape, broadcast or convolution spec was rejected."""


class TapeError(PacgError, ValueError):
    """Backward was requested for a value the active tape never produced."""
