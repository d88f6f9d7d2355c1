"""
End-to-end pipeline: datasets -> partitions -> paired models -> unlearning ->
embeddings -> metrics -> MetricRecords -> StatReport.

Work is split into units of (dataset, training seed, forget fraction); each
unit trains its original and oracle once and evaluates every method on them.
Records are sorted by cell key before aggregation, so results do not depend
on the number of worker threads.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from ruler.core.config import DatasetKind, RulerConfig, UnlearnMethod
from ruler.core.errors import RulerError
from ruler.core.rng import fingerprint_indices
from ruler.data.dataset import TabularDataset, load_csv, make_synthetic
from ruler.data.partition import PartitionSpec, build_partition
from ruler.data.standardize import apply_standardizer, fit_standardizer
from ruler.embedding.matrix import EmbeddingMatrix, ModelRole, ModelTriple, l2_normalize
from ruler.metrics.lens1 import m2
from ruler.metrics.lens2 import m4
from ruler.metrics.output import output_report
from ruler.pipeline.aggregate import StatReport, aggregate
from ruler.pipeline.cells import CellStatus, MetricRecord, RunCell
from ruler.training.cache import ModelCache, cache_key
from ruler.training.mlp import MlpModel, extract_embeddings, per_record_loss, predict, train
from ruler.training.unlearning import unlearn

logger = logging.getLogger("ruler.pipeline")

ProgressFn = Callable[[MetricRecord], None]


class RunResult(BaseModel):
    """Records in cell-key order plus their aggregate."""
    records: List[MetricRecord]
    report: StatReport

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if not r.ok)


class Workbench:
    """
    Shared, lazily built state of a run: datasets, standardised features,
    partitions and trained models. Safe to use from several threads.
    """

    def __init__(self, config: RulerConfig, cache: Optional[ModelCache] = None):
        self.config = config
        self.cache = cache or ModelCache(config.execution.cache_dir)
        self._lock = threading.Lock()
        self._datasets: Dict[str, TabularDataset] = {}
        self._features: Dict[str, np.ndarray] = {}
        self._partitions: Dict[Tuple[str, float, int], PartitionSpec] = {}

    def dataset(self, name: str) -> TabularDataset:
        """Load or generate a dataset and check it can carry the protocol."""
        with self._lock:
            if name not in self._datasets:
                entry = self.config.dataset(name)
                if entry.kind == DatasetKind.CSV:
                    ds = load_csv(
                        entry.path,
                        entry.label_column or "",
                        entry.binarization,
                        entry.positive_class,
                        name=name,
                    )
                else:
                    ds = make_synthetic(entry.synthetic, name=name)
                ds.check_protocol_ready()
                self._datasets[name] = ds
            return self._datasets[name]

    def partition(self, name: str, ff: float, forget_seed: Optional[int] = None) -> PartitionSpec:
        """Partition for (dataset, ff, forget seed); shared by all methods and seeds."""
        seeds = self.config.seeds
        fseed = seeds.forget_seed if forget_seed is None else forget_seed
        ds = self.dataset(name)
        with self._lock:
            key = (name, ff, fseed)
            if key not in self._partitions:
                self._partitions[key] = build_partition(
                    ds, ff, self.config.metrics.test_fraction, seeds.split_seed, fseed
                )
            return self._partitions[key]

    def features(self, name: str, part: PartitionSpec) -> np.ndarray:
        """Features standardised on the training partition."""
        ds = self.dataset(name)
        with self._lock:
            if name not in self._features:
                std = fit_standardizer(ds, part.train)
                self._features[name] = apply_standardizer(std, ds.features)
            return self._features[name]

    def trained(
        self,
        name: str,
        part: PartitionSpec,
        seed: int,
        role: ModelRole,
    ) -> MlpModel:
        """The original (train set) or oracle (retain set) model for a seed."""
        ds = self.dataset(name)
        x = self.features(name, part)
        rows = part.train if role == ModelRole.ORIGINAL else part.retain
        trained_on = fingerprint_indices(rows)
        training = self.config.training
        key = cache_key(ds.fingerprint(), trained_on, seed, training.config_hash())

        def fit() -> List[np.ndarray]:
            logger.info(f"Training {role.value} for {name} seed={seed} (n={len(rows)})")
            return train(x, ds.labels, rows, training, seed, role).params

        return MlpModel(
            params=self.cache.get_or_train(key, fit),
            init_seed=seed,
            dropout_rate=training.dropout_rate,
            role=role,
            trained_on=trained_on,
        )

    def embed(self, model: MlpModel, name: str, part: PartitionSpec) -> EmbeddingMatrix:
        """Normalised penultimate embeddings of every record."""
        return l2_normalize(extract_embeddings(model, self.features(name, part)))


def _failed(cell: RunCell, error: BaseException) -> MetricRecord:
    return MetricRecord(cell=cell, status=CellStatus.FAILED, error=f"{type(error).__name__}: {error}")


def _unit_cells(
    config: RulerConfig, dataset: str, seed: int, ff: float
) -> List[RunCell]:
    return [
        RunCell(
            dataset=dataset,
            train_seed=seed,
            unlearn_seed=config.seeds.unlearn_seed,
            method=method,
            ff=ff,
        )
        for method in config.methods
    ]


def run_unit(bench: Workbench, dataset: str, seed: int, ff: float) -> List[MetricRecord]:
    """
    Evaluate every configured method for one (dataset, seed, ff).

    Failures are recorded per cell; a failure shared by the whole unit (data
    or training) marks all of its cells failed.
    """
    config = bench.config
    cells = _unit_cells(config, dataset, seed, ff)
    try:
        part = bench.partition(dataset, ff)
        ds = bench.dataset(dataset)
        x = bench.features(dataset, part)
        original = bench.trained(dataset, part, seed, ModelRole.ORIGINAL)
        oracle = bench.trained(dataset, part, seed, ModelRole.ORACLE)
        emb_original = bench.embed(original, dataset, part)
        emb_oracle = bench.embed(oracle, dataset, part)
        m4_pre = m4(emb_original, part, config.metrics.m4_cap, config.seeds.m4_cap_seed).aggregate
    except RulerError as e:
        logger.warning(f"{dataset} seed={seed} ff={ff} failed before unlearning: {e}")
        return [_failed(cell, e) for cell in cells]
    except Exception as e:
        logger.exception(f"Unexpected failure preparing {dataset} seed={seed} ff={ff}")
        return [_failed(cell, e) for cell in cells]

    records = []
    for cell in cells:
        try:
            if cell.method == UnlearnMethod.ORACLE:
                unlearned = oracle.replace(list(oracle.params), role=ModelRole.UNLEARNED)
            else:
                ucfg = config.unlearning.for_method(
                    cell.method, cell.unlearn_seed, config.seeds.teacher_seed
                )
                unlearned = unlearn(original, x, ds.labels, part, ucfg)
            emb_unlearned = bench.embed(unlearned, dataset, part)
            triple = ModelTriple(
                original=emb_original,
                unlearned=emb_unlearned,
                oracle=emb_oracle,
                paired_seed=True,
            )
            lens1 = m2(
                triple,
                part,
                config.metrics.baseline_kind,
                config.seeds.retain_subsample_seed,
                config.metrics.retain_subsample_size,
            )
            lens2 = m4(emb_unlearned, part, config.metrics.m4_cap, config.seeds.m4_cap_seed)
            output = output_report(
                per_record_loss(unlearned, x, ds.labels),
                predict(unlearned, x),
                ds.labels,
                part,
                config.metrics.mia_window,
            )
            records.append(MetricRecord(
                cell=cell,
                forget_size=len(part.forget),
                retain_size=len(part.retain),
                original_fingerprint=original.fingerprint(),
                lens1=lens1,
                lens2=lens2,
                output=output,
                m4_pre_unlearning=m4_pre,
            ))
        except RulerError as e:
            logger.warning(f"Cell {cell.label()} failed: {e}")
            records.append(_failed(cell, e))
        except Exception as e:
            logger.exception(f"Unexpected failure in cell {cell.label()}")
            records.append(_failed(cell, e))
    return records


def run_pipeline(
    config: RulerConfig,
    cache: Optional[ModelCache] = None,
    progress: Optional[ProgressFn] = None,
) -> RunResult:
    """
    Run every cell of the configuration and aggregate the results.

    Args:
        config: Validated run configuration
        cache: Model cache shared with other runs (sweeps reuse one)
        progress: Called once per finished record, in completion order

    Returns:
        RunResult with records sorted by (dataset, ff, method, train_seed)
    """
    bench = Workbench(config, cache)
    units = [
        (entry.name, seed, ff)
        for entry in config.datasets
        for ff in config.forget_fractions
        for seed in config.seeds.train_seeds
    ]
    logger.info(
        f"Running {len(units) * len(config.methods)} cells "
        f"on {config.execution.threads} thread(s)"
    )

    records: List[MetricRecord] = []
    with ThreadPoolExecutor(max_workers=config.execution.threads) as pool:
        for unit_records in pool.map(lambda u: run_unit(bench, *u), units):
            records.extend(unit_records)
            if progress is not None:
                for record in unit_records:
                    progress(record)

    records.sort(key=lambda r: r.sort_key())
    report = aggregate(records, config.stats, config.metrics.mia_window)
    failed = sum(1 for r in records if not r.ok)
    if failed:
        logger.warning(f"{failed} of {len(records)} cells failed")
    logger.info(f"Model cache: {bench.cache.hits} hits, {bench.cache.misses} misses")
    return RunResult(records=records, report=report)
