"""
Exception hierarchy shared by every pacgnet app.

Management commands translate these into `CommandError` with the exit
code the CLI contract requires (2 for usage/IO problems, 1 for failed
verification).
"""


class PacgError(Exception):
    """Base class for all errors raised by pacgnet code."""


class ConfigError(PacgError, ValueError):
    """A run configuration file is malformed, has unknown keys or invalid values."""


class CheckpointError(PacgError, ValueError):
    """A checkpoint does not match the model it is loaded into."""


class DatasetError(PacgError, ValueError):
    """A dataset split on disk is missing or malformed."""


class EvaluationError(PacgError, ValueError):
    """Invalid input to the detection metrics."""


class TrainingDiverged(PacgError, RuntimeError):
    """The training loss became NaN or infinite."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"Training diverged at step {step} (loss={loss!r})")


class VerificationFailed(PacgError):
    """One or more gradient checks exceeded the tolerance."""

    def __init__(self, components):
        self.components = list(components)
        super().__init__(f"Gradient check failed for: {', '.join(self.components)}")


class ParameterError(PacgError, KeyError):
    """A parameter name is duplicated or unknown to a ParameterSet."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ''
