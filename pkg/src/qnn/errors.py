"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2 (usage),
FormatError -> 3 (I/O), everything else that signals a failed check -> 1.
"""


class QnnError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(QnnError, ValueError):
    """Tensor or layer shapes are inconsistent."""


class ConfigError(QnnError, ValueError):
    """Invalid configuration value or combination."""


class DataError(QnnError, ValueError):
    """Bad payload inside an otherwise well-formed container (NaN feature, label out of range, ...)."""


class FormatError(QnnError, ValueError):
    """Malformed file: wrong magic, truncation, unparsable text."""


class ContractError(QnnError, RuntimeError):
    """An API precondition was violated (non-scalar loss, missing gradients, digest mismatch)."""


class TrainingAbort(QnnError, RuntimeError):
    """Training stopped because the loss became non-finite."""
