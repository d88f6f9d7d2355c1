"""
Verification of externally produced embeddings.

M4 needs only the unlearned embeddings and the partition. M1/M2 need an
oracle trained from the same seed as the original; M3 also needs the
original. Metrics the inputs cannot support are left absent.
"""

import logging
from pathlib import Path
from typing import Optional, Union

from ruler.core.config import BaselineKind
from ruler.core.errors import (
    DimMismatchError,
    IndexOutOfRangeError,
    MissingOracleForLens1Error,
    UnpairedSeedsError,
)
from ruler.data.partition import PartitionSpec
from ruler.embedding.io import read_rulr
from ruler.embedding.matrix import EmbeddingMatrix, ModelRole, ModelTriple, l2_normalize
from ruler.metrics.lens1 import DEFAULT_SUBSAMPLE, DEFAULT_SUBSAMPLE_SEED, m2
from ruler.metrics.lens2 import DEFAULT_CAP, DEFAULT_CAP_SEED, m4
from ruler.pipeline.cells import MetricRecord

logger = logging.getLogger("ruler.pipeline.verify")

PathLike = Union[str, Path]


def _normalized(m: EmbeddingMatrix) -> EmbeddingMatrix:
    return m if m.normalized else l2_normalize(m)


def verify_embeddings(
    unlearned: EmbeddingMatrix,
    part: PartitionSpec,
    oracle: Optional[EmbeddingMatrix] = None,
    original: Optional[EmbeddingMatrix] = None,
    paired_seed: bool = False,
    require_lens1: bool = False,
    baseline_kind: BaselineKind = BaselineKind.MEDIAN,
    subsample_seed: int = DEFAULT_SUBSAMPLE_SEED,
    subsample_size: int = DEFAULT_SUBSAMPLE,
    cap: int = DEFAULT_CAP,
    cap_seed: int = DEFAULT_CAP_SEED,
) -> MetricRecord:
    """
    Compute whichever lenses the supplied matrices permit.

    Args:
        unlearned: Embeddings of the model under audit
        part: Partition over the matrices' record indexing
        oracle: Optional retrain-oracle embeddings
        original: Optional pre-unlearning embeddings (enables M3 and the pre-unlearning M4)
        paired_seed: Caller asserts original and oracle share an initialisation seed
        require_lens1: Fail instead of skipping Lens-1 when no oracle is given

    Returns:
        MetricRecord without a run cell

    Raises:
        MissingOracleForLens1Error: Lens-1 required but no oracle supplied
        UnpairedSeedsError: Oracle supplied without the paired-seed assertion
        DimMismatchError: Matrices disagree on shape
        IndexOutOfRangeError: Partition indices exceed the matrices
    """
    if require_lens1 and oracle is None:
        raise MissingOracleForLens1Error("Lens-1 metrics need oracle embeddings")
    if original is not None and oracle is None:
        logger.info("Original supplied without oracle; only M4 diagnostics are computed")

    present = [m for m in (unlearned, oracle, original) if m is not None]
    shapes = {m.data.shape for m in present}
    if len(shapes) != 1:
        raise DimMismatchError(f"Embedding matrices disagree on shape: {sorted(shapes)}")

    every = part.retain + part.forget + part.test
    if every and max(every) >= unlearned.n_records:
        raise IndexOutOfRangeError(
            f"Partition index {max(every)} exceeds {unlearned.n_records} embedding rows"
        )

    emb_u = _normalized(unlearned.with_role(ModelRole.UNLEARNED))
    record = MetricRecord(
        forget_size=len(part.forget),
        retain_size=len(part.retain),
        lens2=m4(emb_u, part, cap, cap_seed),
    )

    if original is not None:
        emb_o = _normalized(original.with_role(ModelRole.ORIGINAL))
        record.m4_pre_unlearning = m4(emb_o, part, cap, cap_seed).aggregate
    else:
        emb_o = None

    if oracle is not None:
        if not paired_seed:
            raise UnpairedSeedsError(
                "Lens-1 metrics need original and oracle from one seed; pass the paired-seed flag"
            )
        triple = ModelTriple(
            original=emb_o,
            unlearned=emb_u,
            oracle=_normalized(oracle.with_role(ModelRole.ORACLE)),
            paired_seed=True,
        )
        record.lens1 = m2(triple, part, baseline_kind, subsample_seed, subsample_size)
    return record


def verify_external(
    emb_unlearned: PathLike,
    partition: PathLike,
    emb_oracle: Optional[PathLike] = None,
    emb_original: Optional[PathLike] = None,
    paired_seed: bool = False,
    require_lens1: bool = False,
    baseline_kind: BaselineKind = BaselineKind.MEDIAN,
    subsample_seed: int = DEFAULT_SUBSAMPLE_SEED,
    cap_seed: int = DEFAULT_CAP_SEED,
) -> MetricRecord:
    """Read RULR files and a partition JSON, then verify."""
    part = PartitionSpec.load(partition)
    return verify_embeddings(
        read_rulr(emb_unlearned, ModelRole.UNLEARNED),
        part,
        oracle=read_rulr(emb_oracle, ModelRole.ORACLE) if emb_oracle else None,
        original=read_rulr(emb_original, ModelRole.ORIGINAL) if emb_original else None,
        paired_seed=paired_seed,
        require_lens1=require_lens1,
        baseline_kind=baseline_kind,
        subsample_seed=subsample_seed,
        cap_seed=cap_seed,
    )
