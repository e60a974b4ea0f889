"""Exception taxonomy shared across the toolkit.

All domain errors derive from :class:`FusionToolError` so callers (and the
CLI) can map them to exit codes without catching bare ``Exception``.
"""


class FusionToolError(Exception):
    """Base class for every error raised by this package."""


class FormatError(FusionToolError):
    """A header, CSV, or checkpoint file is malformed."""


class IntegrityError(FusionToolError):
    """A payload does not match its declared size or layout."""


class DataError(FusionToolError):
    """Values violate a data invariant (non-finite, out of range, ...)."""


class ShapeError(FusionToolError):
    """Operands have inconsistent dimensions."""


class ConfigError(FusionToolError):
    """A configuration file or argument is invalid."""


class ModeError(FusionToolError):
    """An operation was invoked in the wrong blind/noblind mode."""


class MetricUndefinedError(FusionToolError):
    """A metric has no defined value for the given inputs."""


class DivergenceError(FusionToolError):
    """Training produced a non-finite loss.

    ``last_finite_iteration`` is the index of the last step whose loss was
    still finite, or -1 if the very first evaluation diverged.
    """

    def __init__(self, message: str, last_finite_iteration: int):
        super().__init__(message)
        self.last_finite_iteration = last_finite_iteration
