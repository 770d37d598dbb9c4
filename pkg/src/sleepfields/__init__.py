"""Conditional-field sequence labelers (CRF, CNF, HCRF, LDCRF, LDCNF), an HMM
baseline, FCM and DBN feature extractors, and a cross-validation harness."""

from .core import (
    Dataset,
    FoldSplit,
    LabelAlphabet,
    LabelSequence,
    ObservationSequence,
    load_dataset,
    split_folds,
    standardize,
    write_dataset,
)
from .errors import (
    ConfigurationError,
    DataError,
    InputError,
    NumericError,
    SleepFieldsError,
    TrainingError,
)
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FoldSplit",
    "LabelAlphabet",
    "LabelSequence",
    "ObservationSequence",
    "load_dataset",
    "split_folds",
    "standardize",
    "write_dataset",
    "ConfigurationError",
    "DataError",
    "InputError",
    "NumericError",
    "SleepFieldsError",
    "TrainingError",
    "TrainConfig",
]
