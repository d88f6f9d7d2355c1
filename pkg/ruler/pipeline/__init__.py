"""
Orchestration: run cells, aggregation, external verification, calibration and sweeps.
"""

from ruler.pipeline.aggregate import (
    HoldsEntry,
    MetricSummary,
    MiaWindowEntry,
    PairwiseComparison,
    StatReport,
    aggregate,
)
from ruler.pipeline.calibration import (
    CalibrationReport,
    calibrate_oracle_pairs,
    paired_seed_check,
    pool_oracle_pairs,
    run_calibration,
    teacher_seed_stability,
)
from ruler.pipeline.cells import CellStatus, MetricRecord, RunCell
from ruler.pipeline.runner import RunResult, Workbench, run_pipeline, run_unit
from ruler.pipeline.sweep import SweepReport, scaled_epochs, sweep
from ruler.pipeline.verify import verify_embeddings, verify_external

__all__ = [
    "HoldsEntry",
    "MetricSummary",
    "MiaWindowEntry",
    "PairwiseComparison",
    "StatReport",
    "aggregate",
    "CalibrationReport",
    "calibrate_oracle_pairs",
    "paired_seed_check",
    "pool_oracle_pairs",
    "run_calibration",
    "teacher_seed_stability",
    "CellStatus",
    "MetricRecord",
    "RunCell",
    "RunResult",
    "Workbench",
    "run_pipeline",
    "run_unit",
    "SweepReport",
    "scaled_epochs",
    "sweep",
    "verify_embeddings",
    "verify_external",
]
