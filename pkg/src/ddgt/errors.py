"""Exception types raised across the package."""


class DdgtError(Exception):
    """Base class for all package errors."""


class NotStronglyConnected(DdgtError):
    pass


class NoConvergence(DdgtError):
    pass


class ParseError(DdgtError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class InvalidWeights(DdgtError):
    pass


class DimensionMismatch(DdgtError):
    pass


class InnerSolverFailure(DdgtError):
    pass


class InfeasibleBounds(DdgtError):
    pass


class StalledDivergence(DdgtError):
    """Raised when an iterate becomes non-finite; usually the stepsize is too large."""

    def __init__(self, k: int, message: str = ""):
        super().__init__(message or f"non-finite iterate at k={k}")
        self.k = k


class NonPositiveSeries(DdgtError):
    pass


class ConfigError(DdgtError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason
