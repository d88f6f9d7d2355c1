"""
Oracle-free percentile-rank metric M4.

For each forget record, s_f is its highest cosine to any record in the retain
pool. Each retain record gets a leave-one-out s_r over the same pool. The
record's rank is the fraction of s_r values that are <= s_f; M4 is the mean
rank over the forget set. Under exchangeability M4 is 0.5.
"""

import logging
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from ruler.core.errors import (
    EmptyForgetSetError,
    EmptyRetainSetError,
    IndexOutOfRangeError,
    NotNormalizedError,
    RetainTooSmallError,
)
from ruler.core.rng import stream
from ruler.data.partition import PartitionSpec
from ruler.embedding.matrix import BLOCK_ROWS, EmbeddingMatrix, iter_similarity_blocks

logger = logging.getLogger("ruler.metrics.lens2")

DEFAULT_CAP = 2000
DEFAULT_CAP_SEED = 42
SIM_DECIMALS = 12


class Lens2Result(BaseModel):
    """Per-record ranks and their aggregate for one embedding matrix."""
    forget_idx: List[int]
    per_record_rank: List[float]
    aggregate: float = Field(ge=0.0, le=1.0)
    retain_cap_applied: bool
    cap_seed: int = Field(ge=0)
    pool_size: int = Field(ge=2)
    s_f_values: List[float]
    s_r_values: List[float] = Field(default_factory=list, exclude=True)

    def to_frame(self) -> pd.DataFrame:
        """Per-record audit table: record_index, s_f, rank."""
        return pd.DataFrame({
            "record_index": self.forget_idx,
            "s_f": self.s_f_values,
            "rank": self.per_record_rank,
        })

    def write_csv(self, path: Union[str, Path]) -> Path:
        """Write the per-record audit table."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        return path


def _require_normalized(m: EmbeddingMatrix) -> None:
    if not m.normalized:
        raise NotNormalizedError("M4 needs an L2-normalised embedding matrix")


def retain_pool(
    retain: Sequence[int],
    cap: int = DEFAULT_CAP,
    cap_seed: int = DEFAULT_CAP_SEED,
) -> tuple[np.ndarray, bool]:
    """
    The retain candidates shared by s_f maxima and the s_r population.

    Returns:
        (sorted pool indices, whether the cap removed records)
    """
    pool = np.sort(np.asarray(retain, dtype=np.int64))
    if pool.size == 0:
        raise EmptyRetainSetError("Retain set is empty")
    if pool.size <= cap:
        return pool, False
    rng = stream("m4-cap", "", cap_seed)
    return np.sort(rng.choice(pool, size=cap, replace=False)), True


def _nearest(queries: np.ndarray, pool: np.ndarray, exclude_self: bool) -> np.ndarray:
    best = np.empty(queries.shape[0], dtype=np.float64)
    for start, block in iter_similarity_blocks(queries, pool, BLOCK_ROWS):
        if exclude_self:
            rows = np.arange(block.shape[0])
            block[rows, start + rows] = -np.inf
        best[start:start + block.shape[0]] = block.max(axis=1)
    # ties must survive differing BLAS summation orders
    return np.round(best, SIM_DECIMALS)


def s_forget(
    m: EmbeddingMatrix,
    part: PartitionSpec,
    x: int,
    cap: int = DEFAULT_CAP,
    cap_seed: int = DEFAULT_CAP_SEED,
) -> float:
    """Nearest-retain-neighbour similarity of one forget record."""
    _require_normalized(m)
    if x not in part.forget:
        raise IndexOutOfRangeError(f"Record {x} is not in the forget set")
    pool, _ = retain_pool(part.retain, cap, cap_seed)
    return float(_nearest(m.rows([x]), m.rows(pool), exclude_self=False)[0])


def s_retain_loo(
    m: EmbeddingMatrix,
    part: PartitionSpec,
    x: int,
    cap: int = DEFAULT_CAP,
    cap_seed: int = DEFAULT_CAP_SEED,
) -> float:
    """Leave-one-out nearest-retain-neighbour similarity of one retain record."""
    _require_normalized(m)
    pool, _ = retain_pool(part.retain, cap, cap_seed)
    if pool.size < 2:
        raise RetainTooSmallError("Leave-one-out neighbours need at least two retain records")
    hits = np.flatnonzero(pool == x)
    if hits.size == 0:
        raise IndexOutOfRangeError(f"Record {x} is not in the retain pool")
    s_r = _nearest(m.rows(pool), m.rows(pool), exclude_self=True)
    return float(s_r[hits[0]])


def m4(
    m: EmbeddingMatrix,
    part: PartitionSpec,
    cap: int = DEFAULT_CAP,
    cap_seed: int = DEFAULT_CAP_SEED,
) -> Lens2Result:
    """
    Compute per-record percentile ranks and their mean.

    Args:
        m: Normalised embeddings of the model under audit
        part: Partition supplying forget and retain sets
        cap: Maximum retain pool size
        cap_seed: Seed of the pool subsample when the cap applies

    Returns:
        Lens2Result with ranks ordered by forget index

    Raises:
        EmptyForgetSetError: If there are no forget records
        RetainTooSmallError: If the pool has fewer than two records
    """
    _require_normalized(m)
    forget = np.asarray(part.forget, dtype=np.int64)
    if forget.size == 0:
        raise EmptyForgetSetError("Forget set is empty")
    pool, capped = retain_pool(part.retain, cap, cap_seed)
    if pool.size < 2:
        raise RetainTooSmallError("Leave-one-out neighbours need at least two retain records")

    pool_rows = m.rows(pool)
    s_r = _nearest(pool_rows, pool_rows, exclude_self=True)
    s_f = _nearest(m.rows(forget), pool_rows, exclude_self=False)

    ranks = np.searchsorted(np.sort(s_r), s_f, side="right") / pool.size
    if capped:
        logger.debug(f"M4 retain pool capped at {pool.size} of {len(part.retain)}")

    return Lens2Result(
        forget_idx=forget.tolist(),
        per_record_rank=ranks.tolist(),
        aggregate=float(np.mean(ranks)),
        retain_cap_applied=capped,
        cap_seed=cap_seed,
        pool_size=int(pool.size),
        s_f_values=s_f.tolist(),
        s_r_values=s_r.tolist(),
    )
