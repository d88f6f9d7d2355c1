"""
Dense embedding storage and cosine similarity primitives.

Matrices are immutable after construction. Normalisation is an explicit
state transition: similarity functions refuse matrices whose normalized
flag is not set, and never normalise implicitly.
"""

from enum import Enum
from typing import Any, Iterator, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ruler.core.errors import (
    DimMismatchError,
    IndexOutOfRangeError,
    NotNormalizedError,
    ZeroNormRowError,
)

NORM_TOLERANCE = 1e-5
ZERO_NORM = 1e-12
BLOCK_ROWS = 1024


class ModelRole(str, Enum):
    """Which model produced an embedding matrix."""
    ORIGINAL = "original"
    UNLEARNED = "unlearned"
    ORACLE = "oracle"
    EXTERNAL = "external"


class EmbeddingMatrix(BaseModel):
    """Row-major penultimate activations, one row per record."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray = Field(description="n_records x dim float32 array")
    normalized: bool = Field(default=False)
    model_role: ModelRole = Field(default=ModelRole.EXTERNAL)

    @field_validator("data", mode="before")
    @classmethod
    def validate_data(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float32, order="C", copy=True)
        if arr.ndim != 2:
            raise ValueError(f"embedding data must be 2-D, got {arr.ndim}-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"embedding data must be non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding data contains NaN or Inf")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_norms(self) -> "EmbeddingMatrix":
        if self.normalized:
            norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst > NORM_TOLERANCE:
                raise ValueError(f"normalized flag set but a row norm deviates by {worst:.3g}")
        return self

    @property
    def n_records(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    def row(self, index: int) -> np.ndarray:
        """Return one row as float64."""
        self._check_index(index)
        return self.data[index].astype(np.float64)

    def rows(self, indices: Sequence[int]) -> np.ndarray:
        """Return the selected rows as a float64 array."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_records):
            raise IndexOutOfRangeError(
                f"Index set outside [0, {self.n_records}) for {self.model_role.value} matrix"
            )
        return self.data[idx].astype(np.float64)

    def with_role(self, role: ModelRole) -> "EmbeddingMatrix":
        """Same data under a different role tag."""
        return EmbeddingMatrix(data=self.data, normalized=self.normalized, model_role=role)

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.n_records:
            raise IndexOutOfRangeError(
                f"Record {index} outside [0, {self.n_records})"
            )


class ModelTriple(BaseModel):
    """
    Original, unlearned and oracle embeddings over one record indexing.

    The original matrix may be absent when only M1/M2 are wanted.
    """

    model_config = ConfigDict(frozen=True)

    original: Optional[EmbeddingMatrix] = None
    unlearned: EmbeddingMatrix
    oracle: EmbeddingMatrix
    paired_seed: bool = Field(default=False)

    @model_validator(mode="after")
    def validate_shapes(self) -> "ModelTriple":
        shapes = {m.data.shape for m in self.present()}
        if len(shapes) != 1:
            raise ValueError(f"triple matrices disagree on shape: {sorted(shapes)}")
        return self

    def present(self) -> list[EmbeddingMatrix]:
        """Matrices actually supplied, original first."""
        found = [self.unlearned, self.oracle]
        if self.original is not None:
            found.insert(0, self.original)
        return found

    @property
    def normalized(self) -> bool:
        return all(m.normalized for m in self.present())


def l2_normalize(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """
    Divide every row by its Euclidean norm.

    Args:
        m: Matrix with finite rows

    Returns:
        New matrix with the normalized flag set

    Raises:
        ZeroNormRowError: If any row norm is below 1e-12
    """
    data = m.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    dead = np.flatnonzero(norms < ZERO_NORM)
    if dead.size:
        raise ZeroNormRowError(int(dead[0]))
    return EmbeddingMatrix(
        data=data / norms[:, None],
        normalized=True,
        model_role=m.model_role,
    )


def _require_normalized(*matrices: EmbeddingMatrix) -> None:
    for m in matrices:
        if not m.normalized:
            raise NotNormalizedError(
                f"{m.model_role.value} matrix is not L2-normalised; call l2_normalize first"
            )


def _require_same_dim(a: EmbeddingMatrix, b: EmbeddingMatrix) -> None:
    if a.dim != b.dim:
        raise DimMismatchError(f"Embedding dims differ: {a.dim} vs {b.dim}")


def cosine_cross(a: EmbeddingMatrix, b: EmbeddingMatrix, record: int) -> float:
    """Cosine similarity of one record across two models."""
    _require_normalized(a, b)
    _require_same_dim(a, b)
    a._check_index(record)
    b._check_index(record)
    return float(np.dot(a.row(record), b.row(record)))


def cosine_within(m: EmbeddingMatrix, r1: int, r2: int) -> float:
    """Cosine similarity of two records within one model."""
    _require_normalized(m)
    m._check_index(r1)
    m._check_index(r2)
    return float(np.dot(m.row(r1), m.row(r2)))


def cross_similarities(
    a: EmbeddingMatrix,
    b: EmbeddingMatrix,
    records: Sequence[int],
) -> np.ndarray:
    """Vector of cosine_cross values over a record set, accumulated in float64."""
    _require_normalized(a, b)
    _require_same_dim(a, b)
    if a.n_records != b.n_records:
        raise DimMismatchError(f"Record counts differ: {a.n_records} vs {b.n_records}")
    return np.einsum("ij,ij->i", a.rows(records), b.rows(records))


def iter_similarity_blocks(
    queries: np.ndarray,
    pool: np.ndarray,
    block_rows: int = BLOCK_ROWS,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (offset, queries[block] @ pool.T) in row blocks."""
    for start in range(0, queries.shape[0], block_rows):
        yield start, queries[start:start + block_rows] @ pool.T
