"""Exception types raised by the library."""


class SheafNtkError(Exception):
    """Base class for all library errors."""


class InvalidGraph(SheafNtkError, ValueError):
    pass


class InvalidSheaf(SheafNtkError, ValueError):
    pass


class ShapeMismatch(SheafNtkError, ValueError):
    pass


class SingularDegreeBlock(SheafNtkError, ArithmeticError):
    """A k x k block of the degree matrix is not positive definite."""


class AlphaOutOfRange(SheafNtkError, ValueError):
    pass


class NonPositiveVariance(SheafNtkError, ArithmeticError):
    """A self-covariance diagonal needed by a Gaussian expectation is negative."""


class IncompatibleItems(SheafNtkError, ValueError):
    pass


class SingularSystem(SheafNtkError, ArithmeticError):
    pass


class TooLarge(SheafNtkError, ValueError):
    pass


class DisconnectedGraph(SheafNtkError, ValueError):
    pass
