"""Exception hierarchy shared across the package.

CLI exit-code mapping: InputError -> 2, NumericalFailure -> 3, LimitReached -> 4.
"""


class CutgateError(Exception):
    pass


class InputError(CutgateError):
    """Malformed input: dimension mismatch, bad option, missing file."""


class NumericalFailure(CutgateError):
    """A solve failed numerically (pivot limit, non-finite loss, lost duality)."""


class LimitReached(CutgateError):
    """An iteration or node cap was hit without meeting the requested tolerance."""
