"""
One-axis sweeps over the unlearning learning rate, the forget-set seed or the
M2 baseline kind. Every point reruns the pipeline with one shared model cache.
"""

import logging
import math
from collections import defaultdict
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ruler.core.config import (
    BaselineKind,
    RulerConfig,
    SweepAxis,
    UnlearnMethod,
    WilcoxonPooling,
)
from ruler.pipeline.aggregate import StatReport
from ruler.pipeline.cells import MetricRecord
from ruler.pipeline.runner import run_pipeline
from ruler.training.cache import ModelCache

logger = logging.getLogger("ruler.pipeline.sweep")


class SweepPoint(BaseModel):
    """Aggregate of one sweep value."""
    value: str
    report: StatReport
    holds: int
    configurations: int
    epochs: Dict[str, int] = Field(default_factory=dict)


class SeedSdRow(BaseModel):
    """Across-forget-seed SD of dataset means, median over methods."""
    dataset: str
    ff: float
    forget_size: Optional[int] = None
    m2_sd: float
    m4_sd: float


class SignFlip(BaseModel):
    """Sign of mean M2 under the median and mean baselines."""
    method: str
    ff: float
    median_m2: float
    mean_m2: float
    flipped: bool


class SweepReport(BaseModel):
    axis: SweepAxis
    points: List[SweepPoint]
    seed_sd: List[SeedSdRow] = Field(default_factory=list)
    sign_flips: List[SignFlip] = Field(default_factory=list)

    @property
    def n_flipped(self) -> int:
        return sum(1 for f in self.sign_flips if f.flipped)


def scaled_epochs(base_epochs: int, lr: float, reference_lr: float) -> int:
    """Epochs scaled inversely with the learning rate: max(1, round(base * ref / lr))."""
    return max(1, int(math.floor(base_epochs * reference_lr / lr + 0.5)))


def _lr_point(config: RulerConfig, lr: float) -> Tuple[RulerConfig, Dict[str, int]]:
    settings = config.unlearning
    epochs = {
        m: scaled_epochs(settings.epochs_for(m), lr, config.sweep.reference_lr)
        for m in config.methods
        if m != UnlearnMethod.ORACLE
    }
    unlearning = settings.model_copy(update={"lr_u": lr, "epochs": epochs})
    return config.model_copy(update={"unlearning": unlearning}), {m.value: e for m, e in epochs.items()}


def _point(value: str, report: StatReport, epochs: Optional[Dict[str, int]] = None) -> SweepPoint:
    holds, total = report.holds_count()
    return SweepPoint(value=value, report=report, holds=holds, configurations=total, epochs=epochs or {})


def _dataset_method_means(
    records: List[MetricRecord], metric: str
) -> Dict[Tuple[str, float, str], float]:
    grouped: Dict[Tuple[str, float, str], List[float]] = defaultdict(list)
    for r in records:
        if r.ok and r.cell is not None:
            v = r.metric(metric)
            if v is not None:
                grouped[(r.cell.dataset, r.cell.ff, r.cell.method.value)].append(v)
    return {k: float(np.mean(v)) for k, v in grouped.items()}


def seed_sd_table(
    runs: List[List[MetricRecord]],
    forget_sizes: Dict[Tuple[str, float], int],
) -> List[SeedSdRow]:
    """SD across forget seeds of each (dataset, ff, method) mean, median over methods."""
    per_run = [(_dataset_method_means(r, "M2"), _dataset_method_means(r, "M4")) for r in runs]
    keys = sorted(set.intersection(*(set(m2) for m2, _ in per_run)))
    by_cell: Dict[Tuple[str, float], Dict[str, Tuple[float, float]]] = defaultdict(dict)
    for key in keys:
        dataset, ff, method = key
        m2_sd = float(np.std([m2[key] for m2, _ in per_run], ddof=1))
        m4_sd = float(np.std([m4[key] for _, m4 in per_run], ddof=1))
        by_cell[(dataset, ff)][method] = (m2_sd, m4_sd)

    rows = []
    for (dataset, ff), methods in sorted(by_cell.items()):
        rows.append(SeedSdRow(
            dataset=dataset,
            ff=ff,
            forget_size=forget_sizes.get((dataset, ff)),
            m2_sd=float(np.median([v[0] for v in methods.values()])),
            m4_sd=float(np.median([v[1] for v in methods.values()])),
        ))
    return rows


def sign_flips(median_report: StatReport, mean_report: StatReport) -> List[SignFlip]:
    """Per (method, ff): does switching the baseline flip the sign of mean M2?"""
    flips = []
    for s in median_report.summaries:
        if s.metric != "M2":
            continue
        other = mean_report.summary(s.method, s.ff, "M2")
        if other is None:
            continue
        flips.append(SignFlip(
            method=s.method,
            ff=s.ff,
            median_m2=s.mean,
            mean_m2=other.mean,
            flipped=bool(np.sign(s.mean) != np.sign(other.mean)),
        ))
    return flips


def sweep(
    config: RulerConfig,
    axis: SweepAxis,
    cache: Optional[ModelCache] = None,
) -> SweepReport:
    """
    Rerun the pipeline at every value of one axis.

    Args:
        config: Base configuration
        axis: lr_u, forget_seed or baseline_kind
        cache: Model cache shared across points

    Returns:
        SweepReport with one StatReport per point plus the axis-specific table
    """
    cache = cache or ModelCache(config.execution.cache_dir)
    points: List[SweepPoint] = []

    if axis == SweepAxis.LR_U:
        for lr in config.sweep.lr_values:
            point_cfg, epochs = _lr_point(config, lr)
            logger.info(f"Sweep lr_u={lr:g} epochs={epochs}")
            result = run_pipeline(point_cfg, cache)
            points.append(_point(f"{lr:g}", result.report, epochs))
        return SweepReport(axis=axis, points=points)

    if axis == SweepAxis.FORGET_SEED:
        runs = []
        forget_sizes: Dict[Tuple[str, float], int] = {}
        for seed in config.sweep.forget_seeds:
            seeds = config.seeds.model_copy(update={"forget_seed": seed})
            logger.info(f"Sweep forget_seed={seed}")
            result = run_pipeline(config.model_copy(update={"seeds": seeds}), cache)
            runs.append(result.records)
            for r in result.records:
                if r.ok and r.cell is not None and r.forget_size is not None:
                    forget_sizes[(r.cell.dataset, r.cell.ff)] = r.forget_size
            points.append(_point(str(seed), result.report))
        table = seed_sd_table(runs, forget_sizes) if len(runs) > 1 else []
        return SweepReport(axis=axis, points=points, seed_sd=table)

    reports: Dict[BaselineKind, StatReport] = {}
    stats = config.stats.model_copy(update={"wilcoxon_pooling": WilcoxonPooling.OBSERVATIONS})
    for kind in config.sweep.baseline_kinds:
        metrics = config.metrics.model_copy(update={"baseline_kind": kind})
        logger.info(f"Sweep baseline_kind={kind.value}")
        result = run_pipeline(config.model_copy(update={"metrics": metrics, "stats": stats}), cache)
        reports[kind] = result.report
        points.append(_point(kind.value, result.report))
    flips = []
    if BaselineKind.MEDIAN in reports and BaselineKind.MEAN in reports:
        flips = sign_flips(reports[BaselineKind.MEDIAN], reports[BaselineKind.MEAN])
    return SweepReport(axis=axis, points=points, sign_flips=flips)
