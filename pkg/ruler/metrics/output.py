"""
Output-level evaluation: loss-threshold membership inference and accuracies.
"""

from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ruler.core.errors import EmptyPopulationError, LengthMismatchError, NonFiniteInputError
from ruler.data.partition import PartitionSpec

MIA_NULL = 0.5
DEFAULT_WINDOW = 0.05


class Population(str, Enum):
    """Which record set a loss vector covers."""
    FORGET = "forget"
    TEST = "test"
    RETAIN = "retain"


class LossVector(BaseModel):
    """Per-record cross-entropy losses of one population."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    losses: np.ndarray
    population: Population

    @field_validator("losses", mode="before")
    @classmethod
    def validate_losses(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("losses must be finite")
        if np.any(arr < 0):
            raise ValueError("losses must be non-negative")
        arr.setflags(write=False)
        return arr

    def __len__(self) -> int:
        return int(self.losses.size)


class OutputReport(BaseModel):
    """MIA and accuracies for one model. passes_mia_window is the per-cell verdict."""

    mia_balanced_acc: float = Field(ge=0.0, le=1.0)
    mia_threshold: Optional[float] = Field(
        default=None, description="None when the best threshold is +/-inf"
    )
    retain_acc: float = Field(ge=0.0, le=1.0)
    forget_acc: float = Field(ge=0.0, le=1.0)
    test_acc: float = Field(ge=0.0, le=1.0)
    passes_mia_window: bool


def mia_threshold_attack(
    member_losses: LossVector,
    nonmember_losses: LossVector,
) -> tuple[float, float]:
    """
    Best balanced accuracy of a "member if loss <= t" attacker.

    Candidate thresholds are -inf, every midpoint between consecutive distinct
    pooled losses, and +inf. The maximum is taken in-sample, so the result is
    at least 0.5 and mildly optimistic on small populations.

    Returns:
        (balanced accuracy, smallest maximising threshold)

    Raises:
        EmptyPopulationError: If either population is empty
    """
    members = np.sort(member_losses.losses)
    nonmembers = np.sort(nonmember_losses.losses)
    if members.size == 0 or nonmembers.size == 0:
        raise EmptyPopulationError("Membership inference needs both populations")

    distinct = np.unique(np.concatenate([members, nonmembers]))
    midpoints = (distinct[:-1] + distinct[1:]) / 2.0
    thresholds = np.concatenate([[-np.inf], midpoints, [np.inf]])

    tpr = np.searchsorted(members, thresholds, side="right") / members.size
    tnr = 1.0 - np.searchsorted(nonmembers, thresholds, side="right") / nonmembers.size
    balanced = (tpr + tnr) / 2.0
    best = int(np.argmax(balanced))
    return float(balanced[best]), float(thresholds[best])


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Fraction of exact matches."""
    pred = np.asarray(predictions)
    true = np.asarray(labels)
    if pred.shape != true.shape:
        raise LengthMismatchError(f"{pred.size} predictions for {true.size} labels")
    if pred.size == 0:
        raise EmptyPopulationError("Accuracy of an empty population is undefined")
    return float(np.mean(pred == true))


def within_window(value: float, null: float = MIA_NULL, window: float = DEFAULT_WINDOW) -> bool:
    """Strict |value - null| < window, robust to float noise at the boundary."""
    return round(abs(value - null), 12) < window


def pass_window(mia_means: Sequence[float], window: float = DEFAULT_WINDOW) -> bool:
    """True iff the mean of per-seed MIA values is within the window around 0.5."""
    values = np.asarray(mia_means, dtype=np.float64)
    if values.size == 0:
        raise EmptyPopulationError("pass_window needs at least one MIA value")
    if not np.all(np.isfinite(values)):
        raise NonFiniteInputError("MIA values contain NaN or Inf")
    return within_window(float(np.mean(values)), MIA_NULL, window)


def output_report(
    losses: np.ndarray,
    predictions: np.ndarray,
    labels: np.ndarray,
    part: PartitionSpec,
    window: float = DEFAULT_WINDOW,
) -> OutputReport:
    """
    Assemble the output-level report from per-record losses and predictions.

    Members are forget records, non-members are held-out test records.
    """
    def pick(idx: list[int]) -> tuple[np.ndarray, np.ndarray]:
        i = np.asarray(idx, dtype=np.int64)
        return predictions[i], labels[i]

    balanced, threshold = mia_threshold_attack(
        LossVector(losses=losses[part.forget], population=Population.FORGET),
        LossVector(losses=losses[part.test], population=Population.TEST),
    )
    return OutputReport(
        mia_balanced_acc=balanced,
        mia_threshold=threshold if np.isfinite(threshold) else None,
        retain_acc=accuracy(*pick(part.retain)),
        forget_acc=accuracy(*pick(part.forget)),
        test_acc=accuracy(*pick(part.test)),
        passes_mia_window=within_window(balanced, MIA_NULL, window),
    )
