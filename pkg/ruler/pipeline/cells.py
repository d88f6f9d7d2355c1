"""
Run cells and the per-cell metric record.
"""

from enum import Enum
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, Field

from ruler.core.config import UnlearnMethod
from ruler.metrics.lens1 import Lens1Result
from ruler.metrics.lens2 import Lens2Result
from ruler.metrics.output import OutputReport

SCHEMA_VERSION = 1

# Null value of each tested metric
METRIC_NULLS: Dict[str, float] = {
    "M2": 0.0,
    "M3": 0.0,
    "M4": 0.5,
    "MIA": 0.5,
}

METRIC_NAMES = ("M1", "M2", "M3", "M4", "MIA", "retain_acc", "forget_acc", "test_acc")


class CellStatus(str, Enum):
    """Outcome of one cell."""
    COMPLETED = "completed"
    FAILED = "failed"


class RunCell(BaseModel):
    """One (dataset, training seed, method, forget fraction) combination."""
    dataset: str
    train_seed: int = Field(ge=0)
    unlearn_seed: int = Field(default=100, ge=0)
    method: UnlearnMethod
    ff: float = Field(gt=0.0, lt=1.0)

    @property
    def key(self) -> Tuple[str, float, str, int]:
        return (self.dataset, self.ff, self.method.value, self.train_seed)

    def label(self) -> str:
        return f"{self.dataset}/ff={self.ff}/{self.method.value}/seed={self.train_seed}"


class MetricRecord(BaseModel):
    """All metrics of one cell, or the reason it failed."""
    schema_version: int = Field(default=SCHEMA_VERSION)
    cell: Optional[RunCell] = None
    status: CellStatus = Field(default=CellStatus.COMPLETED)
    error: Optional[str] = None
    forget_size: Optional[int] = None
    retain_size: Optional[int] = None
    original_fingerprint: Optional[str] = None
    lens1: Optional[Lens1Result] = None
    lens2: Optional[Lens2Result] = None
    output: Optional[OutputReport] = None
    m4_pre_unlearning: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.status == CellStatus.COMPLETED

    def metric(self, name: str) -> Optional[float]:
        """Scalar metric by name, or None when not computed."""
        if name in ("M1", "M2", "M3"):
            if self.lens1 is None:
                return None
            return getattr(self.lens1, name.lower())
        if name == "M4":
            return self.lens2.aggregate if self.lens2 is not None else None
        if self.output is None:
            return None
        if name == "MIA":
            return self.output.mia_balanced_acc
        if name in ("retain_acc", "forget_acc", "test_acc"):
            return getattr(self.output, name)
        raise KeyError(f"Unknown metric: {name}")

    def sort_key(self) -> Tuple[str, float, str, int]:
        if self.cell is None:
            return ("", 0.0, "", 0)
        return self.cell.key
