"""Exception taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so new error conditions
should subclass one of the three roots below rather than raising bare
exceptions.
"""


class QtailError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigError(QtailError):
    """Invalid configuration, arguments, or file formats."""

    exit_code = 2


class CapacityError(QtailError):
    """A resource limit would be exceeded (qubit cap, dense oracle cap)."""

    exit_code = 4


class CacheMissError(QtailError):
    """Requested sample id is not present in the tensor cache."""


class CacheCorruptionError(QtailError):
    """Cache entry failed checksum verification or is structurally broken."""


class UndefinedMetricError(QtailError):
    """Metric is undefined for the given inputs (e.g. single-class AUROC)."""


class DegenerateTestError(QtailError):
    """Statistical test cannot be computed (e.g. zero-variance differences)."""


class TrainingDivergedError(QtailError):
    """Training produced a non-finite loss."""


class CheckpointMismatchError(QtailError):
    """Checkpoint does not match the configuration it is being loaded into."""
