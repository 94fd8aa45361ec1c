"""Exception hierarchy.

Each error class carries the CLI exit code and a short category string so the
command-line layer can report failures as one machine-parsable line.
"""


class LowLightError(Exception):
    exit_code = 1
    category = "error"


class ValidationError(LowLightError, ValueError):
    """Bad parameters, profiles, bounds or tensor contracts."""

    exit_code = 4
    category = "validation"


class ColorspaceError(ValidationError):
    category = "colorspace"


class DimensionMismatchError(ValidationError):
    category = "dimension-mismatch"


class EmptyProfileSetError(ValidationError):
    category = "empty-profile-set"


class NumericalError(LowLightError, ArithmeticError):
    """An estimate cannot be formed from the data (degenerate statistics)."""

    exit_code = 5
    category = "numerical"


class TextureFloorError(NumericalError):
    category = "texture-floor"


class InsufficientRangeError(NumericalError):
    category = "insufficient-range"


class ClipIOError(LowLightError, OSError):
    exit_code = 3
    category = "io"
