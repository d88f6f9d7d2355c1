"""
Oracle-comparative metrics M1, M2 and M3.

M1 is the mean unlearned-to-oracle cosine over the forget set. M2 subtracts a
retain-set baseline (median by default) so that perfect unlearning scores 0
and residual memorisation scores negative. M3 measures how far unlearning
moved forget records toward the oracle relative to the original model.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ruler.core.config import BaselineKind
from ruler.core.errors import (
    EmptyForgetSetError,
    EmptyRetainSetError,
    MissingOracleForLens1Error,
    NotNormalizedError,
    UnpairedSeedsError,
)
from ruler.core.rng import stream
from ruler.data.partition import PartitionSpec
from ruler.embedding.matrix import ModelTriple, cross_similarities

logger = logging.getLogger("ruler.metrics.lens1")

DEFAULT_SUBSAMPLE = 500
DEFAULT_SUBSAMPLE_SEED = 42


class Lens1Result(BaseModel):
    """M1/M2/M3 for one cell."""
    m1: float
    m2: float
    m3: Optional[float] = None
    retain_baseline: float
    baseline_kind: BaselineKind = BaselineKind.MEDIAN
    retain_subsample_size: int = Field(ge=1)
    retain_subsample_seed: int = Field(ge=0)


def _check_triple(triple: ModelTriple, allow_unpaired: bool) -> None:
    if not triple.paired_seed and not allow_unpaired:
        raise UnpairedSeedsError(
            "Original and oracle must share one initialisation seed for Lens-1 metrics"
        )
    if not triple.normalized:
        raise NotNormalizedError("Lens-1 metrics need L2-normalised embeddings")


def _forget(part: PartitionSpec) -> list[int]:
    if not part.forget:
        raise EmptyForgetSetError("Forget set is empty")
    return part.forget


def m1(triple: ModelTriple, part: PartitionSpec, allow_unpaired: bool = False) -> float:
    """Mean over the forget set of cosine(unlearned, oracle)."""
    _check_triple(triple, allow_unpaired)
    sims = cross_similarities(triple.unlearned, triple.oracle, _forget(part))
    return float(np.mean(sims))


def retain_subsample(
    retain: Sequence[int],
    seed: int = DEFAULT_SUBSAMPLE_SEED,
    size: int = DEFAULT_SUBSAMPLE,
) -> np.ndarray:
    """
    Deterministic subsample of min(size, |retain|) retain indices, sorted.

    Raises:
        EmptyRetainSetError: If the retain set is empty
    """
    pool = np.asarray(retain, dtype=np.int64)
    if pool.size == 0:
        raise EmptyRetainSetError("Retain set is empty")
    if pool.size <= size:
        return np.sort(pool)
    rng = stream("retain-baseline", "", seed)
    return np.sort(rng.choice(pool, size=size, replace=False))


def baseline_value(sims: np.ndarray, kind: BaselineKind) -> float:
    """Median (even sizes average the central pair) or mean of retain similarities."""
    if kind == BaselineKind.MEAN:
        return float(np.mean(sims))
    return float(np.median(sims))


def m2(
    triple: ModelTriple,
    part: PartitionSpec,
    baseline_kind: BaselineKind = BaselineKind.MEDIAN,
    subsample_seed: int = DEFAULT_SUBSAMPLE_SEED,
    subsample_size: int = DEFAULT_SUBSAMPLE,
    allow_unpaired: bool = False,
) -> Lens1Result:
    """
    Signed calibration gap M2 = M1 - retain baseline.

    Args:
        triple: Normalised embeddings; original is optional
        part: Partition whose forget and retain sets are used
        baseline_kind: Median (default) or mean baseline
        subsample_seed: Seed of the retain subsample
        subsample_size: Upper bound on retain records in the baseline
        allow_unpaired: Skip the paired-seed precondition (oracle-pair calibration)

    Returns:
        Lens1Result; m3 is filled when the original matrix is present
    """
    _check_triple(triple, allow_unpaired)
    forget_sims = cross_similarities(triple.unlearned, triple.oracle, _forget(part))
    m1_value = float(np.mean(forget_sims))

    sample = retain_subsample(part.retain, subsample_seed, subsample_size)
    retain_sims = cross_similarities(triple.unlearned, triple.oracle, sample)
    baseline = baseline_value(retain_sims, baseline_kind)

    m3_value: Optional[float] = None
    if triple.original is not None:
        m3_value = m3(triple, part, allow_unpaired=allow_unpaired)

    return Lens1Result(
        m1=m1_value,
        m2=m1_value - baseline,
        m3=m3_value,
        retain_baseline=baseline,
        baseline_kind=baseline_kind,
        retain_subsample_size=int(sample.size),
        retain_subsample_seed=subsample_seed,
    )


def m3(triple: ModelTriple, part: PartitionSpec, allow_unpaired: bool = False) -> float:
    """Mean over the forget set of sim(unlearned, oracle) - sim(original, oracle)."""
    _check_triple(triple, allow_unpaired)
    if triple.original is None:
        raise MissingOracleForLens1Error("M3 needs the original model's embeddings")
    forget = _forget(part)
    after = cross_similarities(triple.unlearned, triple.oracle, forget)
    before = cross_similarities(triple.original, triple.oracle, forget)
    return float(np.mean(after - before))


def baseline_sensitivity(
    triple: ModelTriple,
    part: PartitionSpec,
    subsample_seed: int = DEFAULT_SUBSAMPLE_SEED,
    subsample_size: int = DEFAULT_SUBSAMPLE,
) -> dict[BaselineKind, Lens1Result]:
    """M2 under both baselines on one shared retain subsample."""
    results = {
        kind: m2(triple, part, kind, subsample_seed, subsample_size)
        for kind in (BaselineKind.MEDIAN, BaselineKind.MEAN)
    }
    logger.debug(
        f"M2 median={results[BaselineKind.MEDIAN].m2:.6f} "
        f"mean={results[BaselineKind.MEAN].m2:.6f}"
    )
    return results
