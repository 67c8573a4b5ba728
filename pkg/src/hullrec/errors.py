"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4, anything else derived from HullrecError -> 1.
"""


class HullrecError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(HullrecError):
    """Invalid configuration (unknown key, bad type, out-of-range value)."""

    def __init__(self, message, key=None, line=None):
        parts = []
        if key is not None:
            parts.append(f"key '{key}'")
        if line is not None:
            parts.append(f"line {line}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(message + suffix)
        self.key = key
        self.line = line


class DataError(HullrecError):
    """Missing, malformed or empty input data."""


class NumericError(HullrecError):
    """A numeric computation cannot proceed or failed to converge."""


class FrozenGraphError(HullrecError):
    """Mutation of a frozen graph, or neighborhood query on an unfrozen one."""


class SelfLoopError(HullrecError):
    """Attempt to connect a node to itself."""


class UnknownNodeError(HullrecError):
    """A node id or key that is not part of the graph."""


class VocabularyError(DataError):
    """A node id outside the embedding vocabulary."""


class DimensionMismatchError(NumericError):
    """Operands with incompatible vector dimensions."""


class EmptyHullError(NumericError):
    """A hull operation received an empty vertex set."""


class NotInteriorError(NumericError):
    """Interior depth was requested for a point outside the hull."""
