"""Exception hierarchy shared by every module."""


class PrepressureError(Exception):
    """Base class for all errors raised by the toolkit."""


class InputError(PrepressureError, ValueError):
    """Malformed input or an unmet precondition."""


class CapacityError(PrepressureError, RuntimeError):
    """An exact computation would exceed its search budget.

    ``where`` names the offending ``(omega, k, x)`` triple when known.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class OracleUnavailable(PrepressureError, RuntimeError):
    """An independent oracle cannot be evaluated for this system."""


class InternalError(PrepressureError, RuntimeError):
    """A state that validation should have ruled out."""
