"""Exceptions raised by my_basisnet. The CLI maps them to exit codes."""


class BasisNetError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(BasisNetError, ValueError):
    """A tensor extent does not match what the operation expects."""

    def __init__(self, message: str, axis: str | None = None):
        self.axis = axis
        if axis is not None:
            message = f"[axis {axis}] {message}"
        super().__init__(message)


class RankError(BasisNetError, ValueError):
    """Requested rank Q is outside [1, min(P, L*D^2)] or ranks disagree."""


class NumericError(BasisNetError, ArithmeticError):
    """A numerical routine failed (e.g. the eigensolver did not converge)."""


class DegenerateSpectrumError(NumericError):
    """The eigenvalue spectrum sums to zero."""


class DivergenceError(NumericError):
    """The training loss became NaN or infinite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"Training diverged at epoch {epoch}, batch {batch} (loss={loss})."
        )


class PlanError(BasisNetError, ValueError):
    """A compression plan does not fit the network it is applied to."""


class EmptyPlanError(PlanError):
    """The network has no layer that can be compressed."""


class UnsupportedLayerError(BasisNetError, TypeError):
    """The layer kind is not known to the operation."""


class DataError(BasisNetError, ValueError):
    """A dataset is empty, inconsistent or unreadable."""


class FormatError(DataError):
    """A dataset file does not match its declared binary format."""


class ModelFileError(BasisNetError):
    """A model container could not be read."""

    def __init__(self, message: str, offset: int, path: str | None = None):
        self.offset = offset
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (byte offset {offset})")


class MalformedHeaderError(ModelFileError):
    """The JSON header or the container preamble is invalid."""


class TruncatedPayloadError(ModelFileError):
    """The tensor payload is shorter than the manifest declares."""


class VersionMismatchError(ModelFileError):
    """The container was written with an unsupported format_version."""
