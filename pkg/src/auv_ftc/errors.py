"""Exception types raised across the package."""


class FTCError(Exception):
    """Base class for all package errors."""


class SingularAttitudeError(FTCError):
    """Pitch angle too close to +/- pi/2 for the Euler-rate transform."""


class SaturationError(FTCError):
    """Thruster command exceeds the configured maximum thrust."""


class NonFiniteError(FTCError):
    """A NaN or infinity appeared in a numerical quantity."""


class RankDeficientError(FTCError):
    """Observation matrix does not have full row rank."""


class WeightError(FTCError):
    """Cost weight matrix is not symmetric (semi)definite as required."""


class SingularMatrixError(FTCError):
    """A matrix that must be inverted is singular."""


class SingularCovarianceError(SingularMatrixError):
    """Innovation covariance is not positive definite."""


class ZeroMassError(FTCError):
    """Every posterior product vanished; the filter bank has diverged."""


class DivergenceError(FTCError):
    """Tracking error exceeded the configured abort bound."""

    def __init__(self, message, t=None, error=None):
        super().__init__(message)
        self.t = t
        self.error = error


class ScenarioParseError(FTCError):
    """Scenario file could not be read or parsed."""

    def __init__(self, message, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.line = line
        self.field = field


class ScenarioValidationError(FTCError):
    """Scenario is well formed but violates one or more constraints.

    ``violations`` lists ``(field, message)`` pairs, one per problem found.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{f}: {m}" for f, m in self.violations]
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))


class MissingLogError(FTCError):
    """A log file needed for plotting does not exist (or none was given)."""


class OutputError(FTCError):
    """An output file could not be written."""

    def __init__(self, message, path=None):
        super().__init__(f"{message}: {path}" if path is not None else message)
        self.path = path
