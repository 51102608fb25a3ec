"""Medical segment colorer: weakly supervised segment coloring of clinical notes.

A word -> phrase -> document multi-label model is trained from document-level
labels alone; word tags, colored segments and per-category lexicons are then
read off the phrase-level probabilities.
"""

__version__ = "0.1.0"


class MscError(Exception):
    """Base class for errors raised by this package."""


class DataError(MscError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(MscError, ArithmeticError):
    """A computation produced a non-finite value or failed to converge."""
