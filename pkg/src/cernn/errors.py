"""Exception hierarchy shared by all modules."""


class CernnError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(CernnError, ValueError):
    """Input data or parameters violate an operation's preconditions."""


class SingularMatrixError(CernnError, ArithmeticError):
    """A matrix that must be positive definite is singular or indefinite."""


class UnderdeterminedError(CernnError, ValueError):
    """Neither data nor prior pins down the quantity (n = 0 and lambda = 0)."""


class StratificationError(InvalidInputError):
    """A class would be missing (or too small) in some training fold."""
