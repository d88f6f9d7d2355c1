"""
Train/test splitting and forget-set construction.

The forget set for a (dataset, ff, forget_seed) is drawn once and shared by
every unlearning method and every training seed.
"""

import json
import math
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from ruler.core.errors import DegenerateClassError, PartitionError
from ruler.core.rng import fingerprint_indices, stream
from ruler.data.dataset import TabularDataset

MIN_FORGET = 10


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class PartitionSpec(BaseModel):
    """Retain, forget and test index sets over one dataset."""

    retain: List[int]
    forget: List[int]
    test: List[int] = Field(default_factory=list)
    ff: float = Field(gt=0.0, lt=1.0)
    split_seed: int = Field(default=0, ge=0)
    forget_seed: int = Field(default=0, ge=0)
    n_records: Optional[int] = Field(default=None, ge=1)

    @field_validator("retain", "forget", "test", mode="before")
    @classmethod
    def sort_indices(cls, v: Any) -> List[int]:
        return sorted(int(i) for i in v)

    @model_validator(mode="after")
    def validate_algebra(self) -> "PartitionSpec":
        retain, forget, test = set(self.retain), set(self.forget), set(self.test)
        if len(retain) != len(self.retain) or len(forget) != len(self.forget):
            raise ValueError("index sets must not contain duplicates")
        if len(test) != len(self.test):
            raise ValueError("index sets must not contain duplicates")
        if retain & forget:
            raise ValueError("retain and forget overlap")
        if (retain | forget) & test:
            raise ValueError("training and test indices overlap")
        if self.n_records is not None:
            covered = retain | forget | test
            if covered != set(range(self.n_records)):
                raise ValueError("partition does not cover every record exactly once")
        return self

    @property
    def train(self) -> List[int]:
        return sorted(self.retain + self.forget)

    def train_fingerprint(self) -> str:
        return fingerprint_indices(self.train)

    def to_json(self) -> str:
        """Serialise to the partition JSON interchange format."""
        payload = {
            "retain": self.retain,
            "forget": self.forget,
            "test": self.test,
            "ff": self.ff,
            "split_seed": self.split_seed,
            "forget_seed": self.forget_seed,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "PartitionSpec":
        """Parse the partition JSON interchange format."""
        try:
            data = json.loads(text)
            return cls.model_validate(data)
        except (json.JSONDecodeError, ValueError) as e:
            raise PartitionError(f"Invalid partition JSON: {e}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PartitionSpec":
        """Read a partition JSON file."""
        try:
            return cls.from_json(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise PartitionError(f"Cannot read partition {path}: {e}")


def stratified_split(
    ds: TabularDataset,
    test_frac: float,
    seed: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split records into train and test, stratified by class.

    Each class contributes round(test_frac * n_class) test records, clamped so
    that both sides keep at least one record of the class.

    Args:
        ds: Dataset to split
        test_frac: Fraction of records held out
        seed: Split seed

    Returns:
        Sorted (train_idx, test_idx)

    Raises:
        DegenerateClassError: If a class has fewer than 2 records
    """
    if not 0.0 < test_frac < 1.0:
        raise PartitionError(f"test fraction {test_frac} outside (0, 1)")
    rng = stream("split", ds.name, seed)
    train_parts, test_parts = [], []
    for label in (0, 1):
        members = np.flatnonzero(ds.labels == label)
        if members.size < 2:
            raise DegenerateClassError(label, int(members.size))
        shuffled = rng.permutation(members)
        n_test = min(max(_round_half_up(test_frac * members.size), 1), members.size - 1)
        test_parts.append(shuffled[:n_test])
        train_parts.append(shuffled[n_test:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def forget_size(n_train: int, ff: float) -> int:
    """max(10, floor(ff * n_train))."""
    return max(MIN_FORGET, int(math.floor(ff * n_train + 1e-9)))


def sample_forget_set(
    train_idx: np.ndarray,
    ff: float,
    seed: int,
    key: str = "",
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sample the forget set without replacement from the training indices.

    Args:
        train_idx: Training indices
        ff: Forget fraction
        seed: Forget seed
        key: Dataset name keying the stream

    Returns:
        Sorted (retain_idx, forget_idx)
    """
    train_idx = np.sort(np.asarray(train_idx, dtype=np.int64))
    if train_idx.size <= MIN_FORGET:
        raise PartitionError(
            f"Training set has {train_idx.size} records; more than {MIN_FORGET} are required"
        )
    if not 0.0 < ff < 1.0:
        raise PartitionError(f"forget fraction {ff} outside (0, 1)")
    k = forget_size(train_idx.size, ff)
    if k >= train_idx.size:
        raise PartitionError(f"Forget set of {k} would leave no retain records")
    rng = stream("forget", f"{key}/{ff!r}", seed)
    forget = np.sort(rng.choice(train_idx, size=k, replace=False))
    retain = np.setdiff1d(train_idx, forget, assume_unique=True)
    return retain, forget


def build_partition(
    ds: TabularDataset,
    ff: float,
    test_frac: float,
    split_seed: int,
    forget_seed: int,
) -> PartitionSpec:
    """Split, sample the forget set and assemble a checked PartitionSpec."""
    train_idx, test_idx = stratified_split(ds, test_frac, split_seed)
    retain, forget = sample_forget_set(train_idx, ff, forget_seed, key=ds.name)
    try:
        return PartitionSpec(
            retain=retain.tolist(),
            forget=forget.tolist(),
            test=test_idx.tolist(),
            ff=ff,
            split_seed=split_seed,
            forget_seed=forget_seed,
            n_records=ds.n,
        )
    except ValueError as e:
        raise PartitionError(f"Partition invariant violated: {e}")
