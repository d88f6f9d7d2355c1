"""
Aggregation of MetricRecords into a StatReport.

For every (method, ff, metric) the centred values (metric - null) are fitted
with the random-intercept model grouped by dataset and tested with the
Wilcoxon signed-rank test. When the mixed model is singular or cannot be
fitted, the Wilcoxon p becomes the primary p and the entry is marked as a
fallback. Methods are compared pairwise on dataset-level means with
Benjamini-Hochberg adjustment across all pairs and metrics of one ff.
"""

import logging
from collections import defaultdict
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ruler.core.config import StatsConfig, WilcoxonPooling
from ruler.core.errors import RulerError
from ruler.metrics.output import DEFAULT_WINDOW, pass_window
from ruler.pipeline.cells import METRIC_NULLS, SCHEMA_VERSION, MetricRecord
from ruler.stats.lmm import LmmFit, lmm_reml
from ruler.stats.multiple import benjamini_hochberg
from ruler.stats.wilcoxon import (
    WilcoxonMethod,
    WilcoxonResult,
    effect_size_label,
    wilcoxon_one_sample,
    wilcoxon_paired,
)

logger = logging.getLogger("ruler.pipeline.aggregate")


class MetricSummary(BaseModel):
    """Inference for one (method, ff, metric)."""
    method: str
    ff: float
    metric: str
    null_value: float
    n_obs: int
    n_datasets: int
    mean: float
    sd: Optional[float] = None
    lmm: Optional[LmmFit] = None
    lmm_error: Optional[str] = None
    wilcoxon: Optional[WilcoxonResult] = None
    wilcoxon_error: Optional[str] = None
    r_rb: Optional[float] = None
    effect_size: Optional[str] = None
    primary_p: Optional[float] = None
    singular_fallback: bool = False
    verdict: str = ""


class PairwiseComparison(BaseModel):
    """Paired Wilcoxon of two methods on dataset-level means."""
    ff: float
    metric: str
    method_a: str
    method_b: str
    n_datasets: int
    wilcoxon: Optional[WilcoxonResult] = None
    error: Optional[str] = None
    p_raw: Optional[float] = None
    p_bh: Optional[float] = None
    significant: bool = False


class MiaWindowEntry(BaseModel):
    """Pass-window verdict of one (dataset, method, ff), or pooled when dataset is None."""
    dataset: Optional[str] = None
    method: str
    ff: float
    mean_mia: float
    n: int
    passes: bool


class HoldsEntry(BaseModel):
    """Combined residual criterion M2 < 0 and M4 > 0.5 for one (dataset, method, ff)."""
    dataset: str
    method: str
    ff: float
    mean_m2: float
    mean_m4: float
    holds: bool


class StatReport(BaseModel):
    """Everything inferred from one set of records."""
    schema_version: int = Field(default=SCHEMA_VERSION)
    n_records: int
    n_failed: int
    wilcoxon_pooling: WilcoxonPooling
    summaries: List[MetricSummary] = Field(default_factory=list)
    pairwise: List[PairwiseComparison] = Field(default_factory=list)
    mia_windows: List[MiaWindowEntry] = Field(default_factory=list)
    holds: List[HoldsEntry] = Field(default_factory=list)

    def summary(self, method: str, ff: float, metric: str) -> Optional[MetricSummary]:
        for s in self.summaries:
            if s.method == method and s.ff == ff and s.metric == metric:
                return s
        return None

    def holds_count(self) -> Tuple[int, int]:
        """(configurations where the criterion holds, configurations)."""
        return sum(1 for h in self.holds if h.holds), len(self.holds)


Observations = List[Tuple[str, float]]


def _dataset_means(obs: Observations) -> Dict[str, float]:
    grouped: Dict[str, List[float]] = defaultdict(list)
    for dataset, value in obs:
        grouped[dataset].append(value)
    return {d: float(np.mean(v)) for d, v in sorted(grouped.items())}


def _verdict(metric: str, mean_diff: float, p: Optional[float], alpha: float) -> str:
    if p is None or p >= alpha:
        return "no detectable departure from null"
    if metric == "M2":
        return "residual memorisation" if mean_diff < 0 else "closer to oracle than retain baseline"
    if metric == "M4":
        return "residual memorisation" if mean_diff > 0 else "over-displacement"
    return "above null" if mean_diff > 0 else "below null"


def summarize_metric(
    method: str,
    ff: float,
    metric: str,
    obs: Observations,
    stats_cfg: StatsConfig,
) -> MetricSummary:
    """LMM plus Wilcoxon for one metric's observations (dataset, value)."""
    null = METRIC_NULLS[metric]
    values = np.array([v for _, v in obs], dtype=np.float64)
    groups = [d for d, _ in obs]
    centred = values - null
    means = _dataset_means(obs)

    summary = MetricSummary(
        method=method,
        ff=ff,
        metric=metric,
        null_value=null,
        n_obs=len(obs),
        n_datasets=len(means),
        mean=float(values.mean()),
        sd=float(values.std(ddof=1)) if values.size > 1 else None,
    )

    try:
        summary.lmm = lmm_reml(centred, groups)
    except RulerError as e:
        summary.lmm_error = e.message

    if stats_cfg.wilcoxon_pooling == WilcoxonPooling.DATASET_MEANS:
        tested = np.array(list(means.values()))
    else:
        tested = values
    try:
        w = wilcoxon_one_sample(
            tested, null, WilcoxonMethod.AUTO, exact_cutoff=stats_cfg.exact_cutoff
        )
        summary.wilcoxon = w
        summary.r_rb = w.r_rb
        summary.effect_size = effect_size_label(w.r_rb)
    except RulerError as e:
        summary.wilcoxon_error = e.message

    if summary.lmm is not None and not summary.lmm.singular:
        summary.primary_p = summary.lmm.p_wald
    else:
        summary.singular_fallback = True
        if summary.wilcoxon is not None:
            summary.primary_p = summary.wilcoxon.p_two_sided
        if summary.lmm is not None:
            logger.warning(f"Singular LMM for {method} ff={ff} {metric}; using Wilcoxon")

    summary.verdict = _verdict(
        metric, summary.mean - null, summary.primary_p, stats_cfg.significance
    )
    return summary


def _collect(
    records: Sequence[MetricRecord], metric: str
) -> Dict[Tuple[str, float], Observations]:
    out: Dict[Tuple[str, float], Observations] = defaultdict(list)
    for r in records:
        if not r.ok or r.cell is None:
            continue
        value = r.metric(metric)
        if value is not None:
            out[(r.cell.method.value, r.cell.ff)].append((r.cell.dataset, value))
    return out


def pairwise_comparisons(
    records: Sequence[MetricRecord],
    stats_cfg: StatsConfig,
) -> List[PairwiseComparison]:
    """All method pairs x configured metrics per ff, BH-adjusted within each ff."""
    per_metric = {m: _collect(records, m) for m in stats_cfg.pairwise_metrics}
    methods = sorted({k[0] for obs in per_metric.values() for k in obs})
    ffs = sorted({k[1] for obs in per_metric.values() for k in obs})

    comparisons: List[PairwiseComparison] = []
    for ff in ffs:
        block: List[PairwiseComparison] = []
        for metric in stats_cfg.pairwise_metrics:
            for a, b in combinations(methods, 2):
                means_a = _dataset_means(per_metric[metric].get((a, ff), []))
                means_b = _dataset_means(per_metric[metric].get((b, ff), []))
                shared = sorted(set(means_a) & set(means_b))
                entry = PairwiseComparison(
                    ff=ff, metric=metric, method_a=a, method_b=b, n_datasets=len(shared)
                )
                try:
                    w = wilcoxon_paired(
                        [means_a[d] for d in shared],
                        [means_b[d] for d in shared],
                        exact_cutoff=stats_cfg.exact_cutoff,
                    )
                    entry.wilcoxon = w
                    entry.p_raw = w.p_two_sided
                except RulerError as e:
                    entry.error = e.message
                block.append(entry)

        tested = [c for c in block if c.p_raw is not None]
        if tested:
            adjusted = benjamini_hochberg([c.p_raw for c in tested])
            for c, p in zip(tested, adjusted):
                c.p_bh = float(p)
                c.significant = c.p_bh < stats_cfg.significance
        comparisons.extend(block)
    return comparisons


def mia_windows(
    records: Sequence[MetricRecord],
    window: float = DEFAULT_WINDOW,
) -> List[MiaWindowEntry]:
    """Per-dataset and pooled MIA pass-window verdicts."""
    obs = _collect(records, "MIA")
    entries: List[MiaWindowEntry] = []
    for (method, ff), values in sorted(obs.items()):
        by_dataset: Dict[str, List[float]] = defaultdict(list)
        for dataset, v in values:
            by_dataset[dataset].append(v)
        for dataset, vs in sorted(by_dataset.items()):
            entries.append(MiaWindowEntry(
                dataset=dataset, method=method, ff=ff,
                mean_mia=float(np.mean(vs)), n=len(vs), passes=pass_window(vs, window),
            ))
        pooled = [v for _, v in values]
        entries.append(MiaWindowEntry(
            method=method, ff=ff, mean_mia=float(np.mean(pooled)),
            n=len(pooled), passes=pass_window(pooled, window),
        ))
    return entries


def holds_table(records: Sequence[MetricRecord]) -> List[HoldsEntry]:
    """M2 < 0 and M4 > 0.5 on dataset means, per (dataset, method, ff)."""
    m2_obs = _collect(records, "M2")
    m4_obs = _collect(records, "M4")
    entries = []
    for key in sorted(set(m2_obs) & set(m4_obs)):
        method, ff = key
        m2_means = _dataset_means(m2_obs[key])
        m4_means = _dataset_means(m4_obs[key])
        for dataset in sorted(set(m2_means) & set(m4_means)):
            mean_m2, mean_m4 = m2_means[dataset], m4_means[dataset]
            entries.append(HoldsEntry(
                dataset=dataset, method=method, ff=ff,
                mean_m2=mean_m2, mean_m4=mean_m4,
                holds=mean_m2 < 0.0 and mean_m4 > METRIC_NULLS["M4"],
            ))
    return entries


def aggregate(
    records: Sequence[MetricRecord],
    stats_cfg: Optional[StatsConfig] = None,
    mia_window: float = DEFAULT_WINDOW,
) -> StatReport:
    """
    Build the StatReport from records (any order; they are sorted first).

    Args:
        records: Metric records of a run
        stats_cfg: Inference settings
        mia_window: Half-width of the MIA pass window

    Returns:
        StatReport
    """
    stats_cfg = stats_cfg or StatsConfig()
    ordered = sorted(records, key=lambda r: r.sort_key())

    summaries = []
    for metric in METRIC_NULLS:
        for (method, ff), obs in sorted(_collect(ordered, metric).items()):
            summaries.append(summarize_metric(method, ff, metric, obs, stats_cfg))

    return StatReport(
        n_records=len(ordered),
        n_failed=sum(1 for r in ordered if not r.ok),
        wilcoxon_pooling=stats_cfg.wilcoxon_pooling,
        summaries=summaries,
        pairwise=pairwise_comparisons(ordered, stats_cfg),
        mia_windows=mia_windows(ordered, mia_window),
        holds=holds_table(ordered),
    )
