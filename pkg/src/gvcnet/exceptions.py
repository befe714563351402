class GvcnetError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(GvcnetError, ValueError):
    """Bad input: malformed file, wrong shape, out-of-range value."""


class NumericalError(GvcnetError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""
