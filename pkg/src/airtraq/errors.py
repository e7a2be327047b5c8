"""Error types shared across the package.

Every exception carries a stable ``code`` string so CLI diagnostics and
wire-level rejections can name the failure without string matching on
messages.
"""


class AirtraqError(Exception):
    """Base class for all package errors."""

    code = "ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class ConfigError(AirtraqError):
    """Scenario or pipeline configuration is invalid; message names the key."""

    code = "CONFIG_INVALID"


class EmptySeriesError(AirtraqError):
    """A per-node minute series was empty where data is required."""

    code = "EMPTY_SERIES"


class EmptyInputError(AirtraqError):
    """An input file or sequence had no usable rows."""

    code = "EMPTY_INPUT"


class InsufficientNodesError(AirtraqError):
    """Fewer node estimates available than the fusion minimum."""

    code = "INSUFFICIENT_NODES"


class NonPositiveCapacityError(AirtraqError):
    """Street capacity must be > 0 to normalize a congestion index."""

    code = "NONPOSITIVE_CAPACITY"


class RankDeficientError(AirtraqError):
    """Feature matrix rank is below the number of weights to fit."""

    code = "RANK_DEFICIENT"


class NoOverlapError(AirtraqError):
    """Prediction and truth series share fewer than two minute buckets."""

    code = "NO_OVERLAP"


class StorageError(AirtraqError):
    """Append-only log could not be written; fatal for the connection."""

    code = "STORAGE_FAILURE"


class WireError(AirtraqError):
    """A wire line could not be turned into a valid record.

    ``code`` is one of MALFORMED, UNSUPPORTED_VERSION, INVALID_FIELD;
    ``violations`` lists validation codes for INVALID_FIELD.
    """

    def __init__(self, code: str, message: str = "", violations=None):
        self.code = code
        self.violations = list(violations) if violations else []
        super().__init__(message or code)
