"""Exception types raised across doalab."""


class DoaError(Exception):
    """Base class for all doalab errors."""


class InvalidLayoutParams(DoaError, ValueError):
    pass


class ParseError(DoaError, ValueError):
    pass


class DuplicateSensorId(ParseError):
    pass


class RaggedRows(ParseError):
    pass


class GridNotIntegral(DoaError, ValueError):
    pass


class TooManySources(DoaError, ValueError):
    pass


class BadSourceCount(DoaError, ValueError):
    pass


class NullspaceRankError(DoaError, ValueError):
    """The masked set leaves no room for a nonzero filter row (M - |mask| <= 0)."""


class EmptySpectrum(DoaError, RuntimeError):
    """Every row of the filter is degenerate, so no peak can be located."""


class SingularCovariance(DoaError, ArithmeticError):
    pass


class DegenerateDirection(UserWarning):
    """Warning category: a grid direction lies in the span of the masked directions."""


class NonConvergence(UserWarning):
    pass
