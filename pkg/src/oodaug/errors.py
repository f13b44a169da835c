"""Exception hierarchy shared across the toolkit.

CLI exit codes: UsageError and SpecParseError map to 1, data-shaped
problems (pack format, validation, degenerate score vectors) to 2,
numerical failures to 3.
"""


class OodaugError(Exception):
    """Base class for all toolkit errors."""


class UsageError(OodaugError):
    """Command invoked with inconsistent or missing arguments."""


class SpecParseError(OodaugError):
    """Augmentation spec text does not match the grammar."""


class PackValidationError(OodaugError):
    """An in-memory pack, head, or score set violates an invariant."""


class PackFormatError(OodaugError):
    """On-disk data is missing, truncated, or inconsistent with its metadata."""


class DegenerateScoresError(OodaugError):
    """Score vector cannot support the requested operating point."""


class FitError(OodaugError):
    """Numerical failure while fitting a scorer (singular or rank-deficient data)."""
