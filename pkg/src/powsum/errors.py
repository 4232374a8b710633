"""Exception hierarchy shared by all powsum modules."""


class PowsumError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PowsumError):
    """Malformed or infeasible input (bad JSON, dimension mismatch, ...)."""


class FieldDivisionError(PowsumError, ZeroDivisionError):
    """Division by zero in a field."""


class DegeneracyError(PowsumError):
    """A non-degeneracy condition failed; carries what was measured.

    ``condition`` is 1..4 (the four non-degeneracy conditions) or None for
    structural failures that do not map onto a single condition.
    """

    def __init__(self, message, condition=None, expected=None, measured=None):
        super().__init__(message)
        self.condition = condition
        self.expected = expected
        self.measured = measured

    def report(self):
        return {
            "message": str(self),
            "condition": self.condition,
            "expected": self.expected,
            "measured": self.measured,
        }


class RetryExhaustedError(PowsumError):
    """A randomized step failed repeatedly past its retry cap."""
