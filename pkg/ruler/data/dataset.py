"""
Tabular datasets: CSV ingestion and the synthetic two-blob generator.
"""

import hashlib
import logging
from pathlib import Path
from typing import Any, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ruler.core.config import BinarizationRule, SyntheticConfig
from ruler.core.errors import CsvParseError, DatasetError, NonBinaryLabelError
from ruler.core.rng import stream

logger = logging.getLogger("ruler.data")

MIN_PROTOCOL_RECORDS = 50


class TabularDataset(BaseModel):
    """Binary-labelled tabular records in on-disk order."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray = Field(description="n x d float64 matrix")
    labels: np.ndarray = Field(description="length-n int64 array in {0, 1}")
    name: str = Field(min_length=1)
    planted_idx: List[int] = Field(
        default_factory=list,
        description="Records planted as near-duplicate clusters (synthetic only)",
    )

    @field_validator("features", mode="before")
    @classmethod
    def validate_features(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"features must be a non-empty 2-D matrix, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("features contain NaN or Inf")
        arr.setflags(write=False)
        return arr

    @field_validator("labels", mode="before")
    @classmethod
    def validate_labels(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.int64, copy=True).reshape(-1)
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("labels must be in {0, 1}")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_lengths(self) -> "TabularDataset":
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        return self

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def fingerprint(self) -> str:
        """Content hash of features, labels and name."""
        h = hashlib.sha256(self.name.encode("utf-8"))
        h.update(np.ascontiguousarray(self.features).astype("<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels).astype("<i8").tobytes())
        return h.hexdigest()[:16]

    def class_counts(self) -> dict[int, int]:
        """Record count per class label."""
        return {c: int(np.sum(self.labels == c)) for c in (0, 1)}

    def check_protocol_ready(self) -> None:
        """
        Enforce the invariants the split/forget protocol depends on.

        Raises:
            DatasetError: If a class is missing or there are fewer than 50 records
        """
        counts = self.class_counts()
        missing = [c for c, k in counts.items() if k == 0]
        if missing:
            raise DatasetError(f"Dataset '{self.name}' has no records of class {missing[0]}")
        if self.n < MIN_PROTOCOL_RECORDS:
            raise DatasetError(
                f"Dataset '{self.name}' has {self.n} records; "
                f"the protocol needs at least {MIN_PROTOCOL_RECORDS}"
            )


def _binarize(
    raw: pd.Series,
    rule: BinarizationRule,
    positive_class: Optional[str],
) -> np.ndarray:
    values = raw.astype(str).str.strip()
    classes = sorted(values.unique())

    if set(classes) <= {"0", "1"}:
        return (values == "1").to_numpy(dtype=np.int64)
    if len(classes) == 2 and rule != BinarizationRule.CLASS_VS_REST:
        return (values == classes[1]).to_numpy(dtype=np.int64)

    if rule == BinarizationRule.NONE:
        raise NonBinaryLabelError(
            f"Label column has {len(classes)} classes and binarisation is disabled"
        )
    if rule == BinarizationRule.CLASS_VS_REST:
        if positive_class is None:
            raise NonBinaryLabelError("class_vs_rest requires a positive class")
        target = str(positive_class).strip()
        if target not in classes:
            raise NonBinaryLabelError(f"Positive class {target!r} not present in labels")
    else:
        counts = values.value_counts()
        top = counts.max()
        # ties broken by sorted class name
        target = sorted(counts[counts == top].index)[0]
    logger.debug(f"Binarising labels: {target!r} vs rest ({len(classes)} classes)")
    return (values == target).to_numpy(dtype=np.int64)


def load_csv(
    path: Union[str, Path],
    label_column: str,
    binarization: BinarizationRule = BinarizationRule.MAJORITY_VS_REST,
    positive_class: Optional[str] = None,
    name: Optional[str] = None,
) -> TabularDataset:
    """
    Load a headed CSV file into a TabularDataset.

    Args:
        path: CSV path; the first row must be a header
        label_column: Name of the label column
        binarization: Rule for reducing multi-class labels
        positive_class: Class mapped to 1 under class_vs_rest
        name: Dataset name (defaults to the file stem)

    Returns:
        Dataset with rows in on-disk order

    Raises:
        CsvParseError: On a missing or non-numeric feature cell
        NonBinaryLabelError: If labels cannot be binarised
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DatasetError(f"Cannot read CSV {path}: {e}")

    if label_column not in frame.columns:
        raise DatasetError(f"Label column '{label_column}' not found in {path}")

    feature_columns = [c for c in frame.columns if c != label_column]
    if not feature_columns:
        raise DatasetError(f"No feature columns in {path}")

    labels_raw = frame[label_column]
    blank = labels_raw.str.strip() == ""
    if blank.any():
        row = int(np.flatnonzero(blank.to_numpy())[0])
        raise CsvParseError(row=row, column=label_column, value="")

    features = np.empty((len(frame), len(feature_columns)), dtype=np.float64)
    for j, column in enumerate(feature_columns):
        parsed = pd.to_numeric(frame[column].str.strip(), errors="coerce")
        bad = ~np.isfinite(parsed.to_numpy(dtype=np.float64))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise CsvParseError(row=row, column=column, value=frame[column].iloc[row])
        features[:, j] = parsed.to_numpy(dtype=np.float64)

    labels = _binarize(labels_raw, binarization, positive_class)
    dataset = TabularDataset(features=features, labels=labels, name=name or path.stem)
    logger.info(f"Loaded {dataset.name}: n={dataset.n}, d={dataset.d}")
    return dataset


def make_synthetic(spec: SyntheticConfig, name: str = "synthetic") -> TabularDataset:
    """
    Generate a two-Gaussian-blob binary dataset.

    Class means sit at +/- class_sep/2 along a fixed unit direction. With
    memorization_strength > 0, about 5% of records are replaced by tight
    near-duplicate clusters around a few far-away prototypes with random
    labels; a model can only fit them by memorising.

    Args:
        spec: Size, separation, memorisation strength and seed
        name: Dataset name

    Returns:
        Deterministic dataset for the given spec
    """
    rng = stream("synthetic", name, spec.seed)
    n, d = spec.n, spec.d

    labels = np.zeros(n, dtype=np.int64)
    labels[n // 2:] = 1
    labels = rng.permutation(labels)

    direction = np.ones(d) / np.sqrt(d)
    signs = np.where(labels == 1, 1.0, -1.0)
    features = rng.standard_normal((n, d)) + np.outer(signs * spec.class_sep / 2.0, direction)

    planted: List[int] = []
    if spec.memorization_strength > 0:
        n_planted = max(4, int(np.floor(0.05 * n + 0.5)))
        n_prototypes = max(2, n_planted // 8)
        jitter = 0.05 / spec.memorization_strength
        radius = 4.0 + spec.memorization_strength

        prototypes = rng.standard_normal((n_prototypes, d))
        prototypes *= radius / np.linalg.norm(prototypes, axis=1, keepdims=True)
        prototype_labels = rng.integers(0, 2, size=n_prototypes)

        planted_idx = np.sort(rng.choice(n, size=n_planted, replace=False))
        owner = np.arange(n_planted) % n_prototypes
        features[planted_idx] = prototypes[owner] + jitter * rng.standard_normal((n_planted, d))
        labels[planted_idx] = prototype_labels[owner]
        planted = planted_idx.tolist()

    return TabularDataset(features=features, labels=labels, name=name, planted_idx=planted)
