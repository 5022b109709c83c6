"""Exception types raised across the package."""


class SwarmError(Exception):
    """Base class for all package errors."""


class DimensionError(SwarmError, ValueError):
    """Array shapes or agent counts do not match."""


class InvalidWeightsError(SwarmError, ValueError):
    """A weight matrix is negative somewhere or not row-stochastic."""

    def __init__(self, message, row_sums=None):
        super().__init__(message)
        self.row_sums = row_sums


class NumericalEvaluationError(SwarmError, ArithmeticError):
    """A residual or objective evaluated to a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(SwarmError, ValueError):
    """A scenario configuration is missing, unreadable or inconsistent."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class QPError(SwarmError, RuntimeError):
    """The QP subproblem could not be solved."""


class InfeasibleSolutionError(SwarmError, RuntimeError):
    """The best solution found violates the scenario constraints."""

    def __init__(self, message, bundle=None, violations=None):
        super().__init__(message)
        self.bundle = bundle
        self.violations = violations or {}
