"""Exception hierarchy shared by all eqgap modules."""


class EqGapError(Exception):
    """Base class for all errors raised by eqgap."""


class SingularMatrix(EqGapError, ValueError):
    pass


class NonPositiveJacobian(EqGapError, ValueError):
    """Raised when det(F) <= 0 at an evaluated point or element.

    ``where`` carries an optional location hint (point index, element id).
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class InvalidPoisson(EqGapError, ValueError):
    pass


class InvalidBeta(EqGapError, ValueError):
    pass


class OutOfSupport(EqGapError, ValueError):
    pass


class ParseError(EqGapError, ValueError):
    pass


class SizeMismatch(EqGapError, ValueError):
    pass


class OutOfBounds(EqGapError, ValueError):
    pass


class EmptyMask(EqGapError, ValueError):
    pass


class DegenerateBatch(EqGapError, ValueError):
    pass


class NonConvergence(EqGapError, RuntimeError):
    """Newton solve failed; ``report`` holds the diagnostics collected so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class ConfigError(EqGapError, ValueError):
    pass
