"""Error hierarchy shared by the library and the CLI.

Each error class carries a short machine-readable `code` (used in the
single-line CLI error format ``error: <code>: <detail>``) and the process
exit status the CLI maps it to.
"""


class GeomatchError(Exception):
    """Base class for all library errors."""

    code = "error"
    exit_code = 1


class UsageError(GeomatchError):
    """Bad flags, bad argument combinations, invalid parameter values."""

    code = "usage"
    exit_code = 2


class FormatError(GeomatchError):
    """Malformed file: bad magic, truncated payload, invariant violation."""

    code = "format"
    exit_code = 3


class DimensionError(GeomatchError):
    """Shape, depth, or category mismatch between otherwise valid inputs."""

    code = "dimension"
    exit_code = 4


class MissingArtifactError(GeomatchError):
    """A referenced file or required intermediate does not exist."""

    code = "missing"
    exit_code = 5


class NumericalError(GeomatchError):
    """Numerical failure: singular system, non-finite score, empty score pool."""

    code = "numeric"
    exit_code = 6
