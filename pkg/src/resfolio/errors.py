"""Exception types shared across the package.

Each class marks one failure category so callers can catch precisely;
messages carry the offending row/key/shape where known.
"""


class ResfolioError(Exception):
    """Base class for all package errors."""


class FormatError(ResfolioError):
    """Input file is malformed (missing column, unparseable cell, duplicate row)."""


class DataError(ResfolioError):
    """Values violate a data invariant (non-positive price, too few dates)."""


class AlignmentError(ResfolioError):
    """No usable overlap after aligning dates across symbols or series."""


class WindowError(ResfolioError):
    """Insufficient or degenerate history for the requested window."""


class ShapeError(ResfolioError):
    """Array dimensions do not match the operation's contract."""


class ConfigError(ResfolioError):
    """Invalid or incomplete configuration; message lists offending keys."""


class DomainError(ResfolioError):
    """Scalar parameter outside its mathematical domain."""


class NumericalError(ResfolioError):
    """Numerical failure (SVD non-convergence, non-finite loss)."""


class TrainingError(ResfolioError):
    """Training diverged; message names the epoch."""


class ValidationError(ResfolioError):
    """Input failed a structural validation check (e.g. not a projection)."""


class SpecError(ResfolioError):
    """A model/market specification violates its invariants."""
