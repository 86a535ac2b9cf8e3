"""Exception types shared across the toolkit.

DataError maps to CLI exit code 1 (bad or missing input data),
UsageError to exit code 2 (bad invocation).
"""


class DataError(Exception):
    """Input data violates a precondition (malformed line, empty table,
    duplicate key, missing file, ...)."""


class UsageError(Exception):
    """The operation was invoked incorrectly (unknown key, mismatched
    dimensions, bad flag value, ...)."""
