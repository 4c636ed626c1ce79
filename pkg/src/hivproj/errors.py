"""Exception hierarchy shared across the package."""


class HivprojError(Exception):
    """Base class for all package errors."""


class InvalidInputError(HivprojError):
    """An input value violates a documented precondition."""


class ShapeError(InvalidInputError):
    """Array arguments do not share the required grid or shape."""


class DegenerateTableError(HivprojError):
    """A life table has collapsed (zero person-years in a group)."""


class ScalingError(HivprojError):
    """Trajectory ratio-scaling is undefined (zero raw median with positive sample)."""


class PeriodCoverageError(HivprojError):
    """A five-year period is not fully covered by the annual grid."""


class IntegrationError(HivprojError):
    """The epidemic integrator produced a non-finite state."""


class CalibrationError(HivprojError):
    """Model calibration failed or its inputs are insufficient."""


class MatchingError(HivprojError):
    """Life-expectancy intercept matching could not bracket or reach the target."""


class AlignmentError(HivprojError):
    """Trajectory indices or country sets do not line up across inputs."""


class MalformedIntervalError(HivprojError):
    """An interval has lower bound above its upper bound."""


class SchemaError(HivprojError):
    """A data file violates its schema. Carries file, line and column context."""

    def __init__(self, message, path=None, line=None, column=None):
        context = []
        if path is not None:
            context.append(str(path))
        if line is not None:
            context.append(f"line {line}")
        if column is not None:
            context.append(f"column {column!r}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)
        self.path = path
        self.line = line
        self.column = column


class ConfigError(HivprojError):
    """A run configuration is invalid or references missing files."""
