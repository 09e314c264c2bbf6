"""Exception hierarchy shared by all modules.

The CLI maps :class:`ConfigError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""

from __future__ import annotations


class AnisoError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(AnisoError, ValueError):
    """Invalid user input: expressions, grids, coefficients, config files."""


class ExprSyntaxError(ConfigError):
    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ArityError(ExprSyntaxError):
    pass


class EvaluationError(AnisoError, ArithmeticError):
    """An expression produced a non-finite value."""


class CoefficientError(ConfigError):
    """Coefficient set violates ellipticity, variable dependence or no-flux."""


class NumericalError(AnisoError, RuntimeError):
    """A numerical procedure failed (non-convergence, lost positivity, ...)."""


class ConvergenceError(NumericalError):
    pass


class PositivityError(NumericalError):
    pass


class HypothesisError(NumericalError):
    """The inputs fall outside the setting a limit formula is valid for."""
