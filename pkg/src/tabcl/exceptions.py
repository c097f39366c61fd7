"""Exception types shared across the package.

Plain ``ValueError`` is used for bad arguments (shape mismatches, empty
inputs, out-of-range parameters).  The classes below cover the remaining
failure categories so callers, and the CLI exit-code mapping, can tell
them apart.
"""


class ConfigError(Exception):
    """Invalid or missing configuration: no target column designated, unknown
    detector name, malformed experiment plan."""


class FormatError(Exception):
    """Malformed input file: ragged CSV rows, unparseable numbers, truncated
    artifacts, version mismatch."""


class NumericError(Exception):
    """Numerical failure: non-finite intermediate values, singular systems,
    non-convergent fits."""


class TrainingError(NumericError):
    """Training diverged or failed to make progress."""
