"""
Error hierarchy for RULER.

Every failure a caller is expected to handle derives from RulerError.
Pipeline cells catch RulerError and record the failure instead of
aborting the run.
"""

from typing import Optional


class RulerError(Exception):
    """Base exception for RULER errors."""

    def __init__(self, message: str, recoverable: bool = True):
        self.message = message
        self.recoverable = recoverable
        super().__init__(message)


# Embedding core

class ZeroNormRowError(RulerError):
    """A row has (numerically) zero Euclidean norm and cannot be normalised."""

    def __init__(self, row_index: int):
        self.row_index = row_index
        super().__init__(f"Row {row_index} has zero norm (dead embedding)")


class NotNormalizedError(RulerError):
    """A similarity was requested on a matrix that is not L2-normalised."""


class DimMismatchError(RulerError):
    """Two matrices disagree on embedding dimension or record count."""


class IndexOutOfRangeError(RulerError):
    """A record index lies outside the matrix."""


class EmbeddingFormatError(RulerError):
    """A RULR embedding file is malformed."""


# Data pipeline

class DatasetError(RulerError):
    """A dataset violates an ingestion or protocol invariant."""


class DegenerateClassError(DatasetError):
    """A class has too few records for a stratified split."""

    def __init__(self, label: int, count: int):
        self.label = label
        self.count = count
        super().__init__(f"Class {label} has {count} record(s); at least 2 are required")


class CsvParseError(DatasetError):
    """A CSV cell could not be parsed as a finite number."""

    def __init__(self, row: int, column: str, value: Optional[str] = None):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"Unparseable value {value!r} at row {row}, column '{column}'")


class NonBinaryLabelError(DatasetError):
    """Labels have more than two classes and no binarisation rule applies."""


class PartitionError(RulerError):
    """A partition violates the retain/forget/test algebra."""


# Metrics

class UnpairedSeedsError(RulerError):
    """Lens-1 metrics require original and oracle trained from one seed."""


class EmptyForgetSetError(RulerError):
    """The forget set is empty."""


class EmptyRetainSetError(RulerError):
    """The retain set (or its capped pool) is empty."""


class RetainTooSmallError(RulerError):
    """Leave-one-out neighbours need at least two retain records."""


class EmptyPopulationError(RulerError):
    """A membership-inference population is empty."""


class LengthMismatchError(RulerError):
    """Paired arrays have different lengths."""


# Statistics

class AllZeroDifferencesError(RulerError):
    """Every difference is zero; the signed-rank test is undefined."""


class TooFewGroupsError(RulerError):
    """The mixed model needs at least two groups."""


class NonFiniteInputError(RulerError):
    """Input contains NaN or infinite values."""


class DegenerateVarianceError(RulerError):
    """Residual variance is zero; the mixed model cannot be fitted."""


class PValueRangeError(RulerError):
    """A p-value lies outside [0, 1]."""


# Training

class NonFiniteLossError(RulerError):
    """Training or unlearning diverged."""

    def __init__(self, phase: str, epoch: int):
        self.phase = phase
        self.epoch = epoch
        super().__init__(f"Non-finite loss during {phase} at epoch {epoch}")


class WrongStartingModelError(RulerError):
    """Unlearning must start from the original model."""


class ModelFormatError(RulerError):
    """A RULM model cache file is malformed."""


# Orchestration

class ConfigError(RulerError):
    """The run configuration is invalid."""

    def __init__(self, message: str):
        super().__init__(message, recoverable=False)


class MissingOracleForLens1Error(RulerError):
    """Lens-1 metrics were requested without an oracle embedding file."""
