"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
anything else -> 3 (internal).
"""


class TokswapError(Exception):
    pass


class UsageError(TokswapError):
    """Bad invocation or invalid configuration, caught before any work."""


class DataError(TokswapError):
    """Malformed or inconsistent input data (files, corpora, matrices)."""
