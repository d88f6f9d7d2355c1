"""
Null calibration and seed sanity checks.

- Oracle pairs: independently seeded oracles compared with M2; no unlearning
  happens, so the pair distribution should be centred on zero.
- Paired seeds: original and oracle from one seed should be far more similar
  than models from different seeds.
- Teacher seeds: BadTeacher's M4 should barely move across teacher seeds.
"""

import logging
from itertools import combinations
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from ruler.core.config import RulerConfig, UnlearnMethod
from ruler.core.errors import ConfigError, RulerError
from ruler.embedding.matrix import ModelRole, ModelTriple, cross_similarities
from ruler.metrics.lens1 import m2
from ruler.metrics.lens2 import m4
from ruler.pipeline.runner import Workbench
from ruler.training.cache import ModelCache
from ruler.training.unlearning import unlearn

logger = logging.getLogger("ruler.pipeline.calibration")


class OraclePair(BaseModel):
    seed_a: int
    seed_b: int
    m2: float


class OraclePairCalibration(BaseModel):
    """
    M2 distribution over all oracle pairs of one dataset.

    Every pair shares the dataset's forget set, so `se` is taken over forget
    records of the pair-averaged gap rather than over the dependent pairs.
    `pair_sd` describes the spread of the pair values only.
    """
    dataset: str
    ff: float
    pairs: List[OraclePair]
    n_forget: int
    mean: float
    pair_sd: Optional[float] = None
    se: Optional[float] = None
    centred: bool


class PooledOracleCalibration(BaseModel):
    """Oracle-pair M2 pooled over independently drawn datasets."""
    datasets: List[str]
    n_pairs: int
    mean: float
    se: Optional[float] = None
    centred: bool


class PairedSeedCheck(BaseModel):
    """Mean original-oracle cosine for same-seed versus different-seed pairs."""
    dataset: str
    same_seed_mean: float
    different_seed_mean: float
    gap: float
    passes: bool


class TeacherSeedStability(BaseModel):
    """Per-dataset BadTeacher M4 across teacher seeds."""
    dataset: str
    ff: float
    teacher_seeds: List[int]
    m4_by_teacher: List[float]
    spread: float


class CalibrationReport(BaseModel):
    oracle_pairs: List[OraclePairCalibration] = Field(default_factory=list)
    pooled: Optional[PooledOracleCalibration] = None
    paired_seed: List[PairedSeedCheck] = Field(default_factory=list)
    teacher_stability: List[TeacherSeedStability] = Field(default_factory=list)
    errors: List[str] = Field(default_factory=list)


MIN_PAIRED_GAP = 0.3


def calibrate_oracle_pairs(
    config: RulerConfig,
    dataset: str,
    bench: Optional[Workbench] = None,
) -> OraclePairCalibration:
    """
    Train one oracle per calibration seed and compute M2 for every unordered pair.

    Raises:
        ConfigError: If fewer than two oracle seeds are configured
    """
    seeds = config.calibration.oracle_seeds
    if len(seeds) < 2:
        raise ConfigError("Oracle-pair calibration needs at least two oracle seeds")
    bench = bench or Workbench(config)
    ff = config.calibration.forget_fraction
    part = bench.partition(dataset, ff)

    embeddings = [
        bench.embed(bench.trained(dataset, part, s, ModelRole.ORACLE), dataset, part)
        for s in seeds
    ]
    pairs = []
    forget_sims, baselines = [], []
    for i, j in combinations(range(len(seeds)), 2):
        triple = ModelTriple(
            unlearned=embeddings[i].with_role(ModelRole.UNLEARNED),
            oracle=embeddings[j],
        )
        result = m2(
            triple,
            part,
            config.metrics.baseline_kind,
            config.seeds.retain_subsample_seed,
            config.metrics.retain_subsample_size,
            allow_unpaired=True,
        )
        pairs.append(OraclePair(seed_a=seeds[i], seed_b=seeds[j], m2=result.m2))
        forget_sims.append(cross_similarities(triple.unlearned, triple.oracle, part.forget))
        baselines.append(result.retain_baseline)

    values = np.array([p.m2 for p in pairs])
    # one gap per forget record, averaged over pairs; its mean equals the mean pair M2
    gaps = np.mean(forget_sims, axis=0) - float(np.mean(baselines))
    mean = float(values.mean())
    pair_sd = float(values.std(ddof=1)) if values.size > 1 else None
    se = float(gaps.std(ddof=1) / np.sqrt(gaps.size)) if gaps.size > 1 else None
    centred = _centred(mean, se)
    logger.info(
        f"Oracle pairs on {dataset}: {values.size} pairs, mean M2 {mean:+.5f}"
        + (f", SE {se:.5f}" if se is not None else "")
    )
    return OraclePairCalibration(
        dataset=dataset,
        ff=ff,
        pairs=pairs,
        n_forget=int(gaps.size),
        mean=mean,
        pair_sd=pair_sd,
        se=se,
        centred=centred,
    )


def _centred(mean: float, se: Optional[float]) -> bool:
    if se:
        return bool(abs(mean) < 2.0 * se)
    return abs(mean) <= 1e-6


def pool_oracle_pairs(calibrations: List[OraclePairCalibration]) -> PooledOracleCalibration:
    """
    Pool per-dataset oracle-pair calibrations.

    Datasets have their own forget draws and oracles, so their SEs combine
    as independent terms weighted by pair count.

    Raises:
        ConfigError: If no calibration is given
    """
    if not calibrations:
        raise ConfigError("Nothing to pool: no oracle-pair calibrations")
    counts = np.array([len(c.pairs) for c in calibrations], dtype=np.float64)
    weights = counts / counts.sum()
    mean = float(np.dot(weights, [c.mean for c in calibrations]))
    if all(c.se is not None for c in calibrations):
        se: Optional[float] = float(np.sqrt(np.dot(weights**2, [c.se**2 for c in calibrations])))
    else:
        se = None
    return PooledOracleCalibration(
        datasets=[c.dataset for c in calibrations],
        n_pairs=int(counts.sum()),
        mean=mean,
        se=se,
        centred=_centred(mean, se),
    )


def paired_seed_check(
    config: RulerConfig,
    dataset: str,
    seeds: Optional[List[int]] = None,
    bench: Optional[Workbench] = None,
) -> PairedSeedCheck:
    """Compare same-seed and different-seed original/oracle similarity over all records."""
    seeds = seeds or config.calibration.oracle_seeds[:3]
    if len(seeds) < 2:
        raise ConfigError("Paired-seed check needs at least two seeds")
    bench = bench or Workbench(config)
    part = bench.partition(dataset, config.calibration.forget_fraction)
    records = list(range(bench.dataset(dataset).n))

    originals = {
        s: bench.embed(bench.trained(dataset, part, s, ModelRole.ORIGINAL), dataset, part)
        for s in seeds
    }
    oracles = {
        s: bench.embed(bench.trained(dataset, part, s, ModelRole.ORACLE), dataset, part)
        for s in seeds
    }
    same, different = [], []
    for s in seeds:
        for t in seeds:
            sim = float(np.mean(cross_similarities(originals[s], oracles[t], records)))
            (same if s == t else different).append(sim)

    same_mean, diff_mean = float(np.mean(same)), float(np.mean(different))
    return PairedSeedCheck(
        dataset=dataset,
        same_seed_mean=same_mean,
        different_seed_mean=diff_mean,
        gap=same_mean - diff_mean,
        passes=same_mean - diff_mean >= MIN_PAIRED_GAP,
    )


def teacher_seed_stability(
    config: RulerConfig,
    dataset: str,
    bench: Optional[Workbench] = None,
) -> TeacherSeedStability:
    """BadTeacher M4, averaged over training seeds, for each teacher seed."""
    bench = bench or Workbench(config)
    ff = config.calibration.forget_fraction
    part = bench.partition(dataset, ff)
    ds = bench.dataset(dataset)
    x = bench.features(dataset, part)

    per_teacher = []
    for teacher_seed in config.calibration.teacher_seeds:
        values = []
        for seed in config.seeds.train_seeds:
            original = bench.trained(dataset, part, seed, ModelRole.ORIGINAL)
            ucfg = config.unlearning.for_method(
                UnlearnMethod.BAD_TEACHER, config.seeds.unlearn_seed, teacher_seed
            )
            model = unlearn(original, x, ds.labels, part, ucfg)
            emb = bench.embed(model, dataset, part)
            values.append(m4(emb, part, config.metrics.m4_cap, config.seeds.m4_cap_seed).aggregate)
        per_teacher.append(float(np.mean(values)))

    return TeacherSeedStability(
        dataset=dataset,
        ff=ff,
        teacher_seeds=list(config.calibration.teacher_seeds),
        m4_by_teacher=per_teacher,
        spread=float(max(per_teacher) - min(per_teacher)),
    )


def run_calibration(
    config: RulerConfig,
    include_teacher_seeds: bool = False,
    cache: Optional[ModelCache] = None,
) -> CalibrationReport:
    """Run every calibration check on every configured dataset."""
    bench = Workbench(config, cache)
    report = CalibrationReport()
    for entry in config.datasets:
        name = entry.name
        try:
            report.oracle_pairs.append(calibrate_oracle_pairs(config, name, bench))
            if config.calibration.paired_seed_check:
                report.paired_seed.append(paired_seed_check(config, name, bench=bench))
            if include_teacher_seeds:
                report.teacher_stability.append(teacher_seed_stability(config, name, bench))
        except ConfigError:
            raise
        except RulerError as e:
            logger.warning(f"Calibration on {name} failed: {e}")
            report.errors.append(f"{name}: {e.message}")
    if len(report.oracle_pairs) > 1:
        report.pooled = pool_oracle_pairs(report.oracle_pairs)
    return report
