"""Exception hierarchy and CLI exit codes."""


class NetAdjustError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(NetAdjustError):
    """Invalid parameters, unresolvable names, malformed campaign configs."""

    exit_code = 2


class InvalidParameterError(ConfigError, ValueError):
    """A numeric argument is outside its allowed range."""


class DataError(NetAdjustError):
    """Malformed input files or mismatched unit ids."""

    exit_code = 3


class EdgeListParseError(DataError):
    """Edge-list line that cannot be parsed; carries the line number."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class NumericalError(NetAdjustError):
    """Estimation failed for numerical reasons."""

    exit_code = 4


class SingularDesignError(NumericalError):
    """A per-arm design matrix is rank deficient or too ill-conditioned."""


class DegenerateArmError(NumericalError):
    """An estimator needs units in both arms but one arm is empty."""


class PositivityViolationError(NumericalError):
    """An exposed unit has zero exposure propensity."""


class EstimationFailureError(NumericalError):
    """Too many Monte-Carlo or bootstrap replicates failed."""
