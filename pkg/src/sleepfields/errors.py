"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SleepFieldsError(Exception):
    exit_code = 1


class ConfigurationError(SleepFieldsError, ValueError):
    """Invalid hyperparameters, fold counts or command-line options."""

    exit_code = 2


class SizeError(ConfigurationError):
    """Problem instance too large for exhaustive enumeration."""


class StateError(SleepFieldsError, RuntimeError):
    """Operation called on an object that is not ready for it (e.g. untrained)."""

    exit_code = 2


class DataError(SleepFieldsError, ValueError):
    """Malformed or invalid data values."""

    exit_code = 3


class SchemaError(DataError):
    """Ragged rows, missing columns or dimension mismatches between datasets."""


class InputError(DataError):
    """Arguments with the wrong shape or invalid values passed to a model routine."""


class NumericError(SleepFieldsError, ArithmeticError):
    exit_code = 4


class TrainingError(NumericError):
    """Optimizer divergence or an unrecoverable training failure."""


class DegenerateClusterError(NumericError):
    def __init__(self, clusters):
        self.clusters = list(clusters)
        super().__init__(f"clusters with zero total membership: {self.clusters}")


class ClusteringError(TrainingError):
    pass
