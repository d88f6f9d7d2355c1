"""
Per-feature standardisation fitted on the training partition only.
"""

from typing import Any, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ruler.core.errors import DatasetError
from ruler.core.rng import fingerprint_indices
from ruler.data.dataset import TabularDataset

STD_FLOOR = 1e-12


class Standardizer(BaseModel):
    """Affine per-feature transform (x - mean) / std."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    means: np.ndarray
    stds: np.ndarray
    constant: np.ndarray = Field(description="Boolean mask of zero-variance features")
    fitted_on: str = Field(description="Fingerprint of the training indices")

    @field_validator("means", "stds", "constant", mode="before")
    @classmethod
    def freeze(cls, v: Any) -> np.ndarray:
        arr = np.array(v, copy=True)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_shapes(self) -> "Standardizer":
        if not (self.means.shape == self.stds.shape == self.constant.shape):
            raise ValueError("means, stds and constant mask must share one shape")
        if np.any(self.stds < STD_FLOOR):
            raise ValueError(f"stds must be clamped to at least {STD_FLOOR}")
        return self

    @property
    def d(self) -> int:
        return int(self.means.shape[0])


def fit_standardizer(ds: TabularDataset, train_idx: Sequence[int]) -> Standardizer:
    """
    Fit means and population standard deviations on the training rows.

    Args:
        ds: Dataset
        train_idx: Training indices; test rows must not appear here

    Returns:
        Fitted Standardizer tagged with the training-index fingerprint
    """
    idx = np.asarray(train_idx, dtype=np.int64)
    if idx.size == 0:
        raise DatasetError("Cannot fit a standardizer on an empty training set")
    x = ds.features[idx]
    means = x.mean(axis=0)
    raw_stds = x.std(axis=0, ddof=0)
    constant = raw_stds < STD_FLOOR
    stds = np.maximum(raw_stds, STD_FLOOR)
    return Standardizer(
        means=means,
        stds=stds,
        constant=constant,
        fitted_on=fingerprint_indices(idx.tolist()),
    )


def apply_standardizer(std: Standardizer, features: np.ndarray) -> np.ndarray:
    """Transform features; constant training features map to 0."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != std.d:
        raise DatasetError(f"Expected {std.d} features, got shape {x.shape}")
    out = (x - std.means) / std.stds
    out[:, std.constant] = 0.0
    return out
