"""Error taxonomy shared across the toolkit.

The CLI maps categories to exit codes: validation errors exit 1, data
errors exit 2, numeric faults exit 3.
"""


class HistoseqError(Exception):
    category = "error"
    exit_code = 1


class ValidationError(HistoseqError):
    """Bad arguments, configuration, or missing input artifacts."""

    category = "validation"
    exit_code = 1


class DataError(HistoseqError):
    """Malformed or inconsistent input data."""

    category = "data"
    exit_code = 2


class NumericFault(HistoseqError):
    """Non-finite value produced where a finite one is required."""

    category = "numeric"
    exit_code = 3
