"""
Desk-scale protocol checks. These train many full-size models; run with -m slow.
"""

import json

import numpy as np
import pytest

from ruler.cli import EXIT_OK, main
from ruler.core.config import (
    CalibrationConfig,
    DatasetConfig,
    RulerConfig,
    SeedConfig,
    SyntheticConfig,
    UnlearnMethod,
)
from ruler.output import RECORDS_FILE, REPORT_FILE
from ruler.pipeline.calibration import (
    calibrate_oracle_pairs,
    paired_seed_check,
    run_calibration,
    teacher_seed_stability,
)
from ruler.pipeline.runner import Workbench, run_pipeline


def _datasets(count):
    return [
        DatasetConfig(name=f"synthetic{i}", synthetic=SyntheticConfig(n=1000, d=10, seed=i))
        for i in range(count)
    ]


@pytest.mark.slow
class TestSeedChecks:
    """Seed pairing and teacher-seed stability at protocol size."""

    def test_paired_seed_gap(self):
        """Test same-seed original/oracle similarity beats cross-seed pairs by 0.3."""
        config = RulerConfig(datasets=_datasets(3))
        bench = Workbench(config)

        for entry in config.datasets:
            check = paired_seed_check(config, entry.name, seeds=[0, 1, 2], bench=bench)
            assert check.gap >= 0.3, entry.name
            assert check.passes

    def test_bad_teacher_stable_across_teacher_seeds(self):
        """Test BadTeacher M4 barely moves with the teacher seed."""
        config = RulerConfig(
            datasets=_datasets(1),
            methods=[UnlearnMethod.BAD_TEACHER],
            calibration=CalibrationConfig(teacher_seeds=[100, 101, 102]),
        )

        result = teacher_seed_stability(config, "synthetic0")

        assert len(result.m4_by_teacher) == 3
        assert result.spread < 0.05


@pytest.mark.slow
class TestNullCalibration:
    """Oracle-pair M2 centring at protocol size."""

    def test_oracle_pairs_centred(self):
        """Test 45 oracle pairs on one dataset give |mean M2| under 2 SE."""
        config = RulerConfig(datasets=_datasets(1))

        result = calibrate_oracle_pairs(config, "synthetic0")

        assert len(result.pairs) == 45
        assert result.se is not None and result.se > 0
        assert abs(result.mean) < 2 * result.se
        assert result.centred

    def test_pooled_oracle_pairs_centred(self):
        """Test oracle pairs pooled over three datasets stay centred."""
        config = RulerConfig(
            datasets=_datasets(3),
            calibration=CalibrationConfig(paired_seed_check=False),
        )

        report = run_calibration(config)

        assert not report.errors
        assert report.pooled.n_pairs == 135
        assert report.pooled.centred


@pytest.mark.slow
class TestDirectionalDiscordance:
    """FineTune passes the output-level check while M2 stays negative."""

    def test_finetune_discordance(self):
        """Test M2 < 0 in most cells while MIA and retain accuracy look like the oracle."""
        config = RulerConfig(
            datasets=[
                DatasetConfig(
                    name=f"memorise{i}",
                    synthetic=SyntheticConfig(n=1000, d=10, memorization_strength=1.0, seed=i),
                )
                for i in range(2)
            ],
            methods=[UnlearnMethod.FINETUNE, UnlearnMethod.ORACLE],
            forget_fractions=[0.05],
            seeds=SeedConfig(train_seeds=[0, 1, 2, 3, 4]),
        )

        records = run_pipeline(config).records
        assert all(r.ok for r in records)
        by_cell = {(r.cell.dataset, r.cell.train_seed, r.cell.method): r for r in records}
        cells = [(d.name, s) for d in config.datasets for s in config.seeds.train_seeds]
        finetune = [by_cell[(d, s, UnlearnMethod.FINETUNE)] for d, s in cells]
        oracle = [by_cell[(d, s, UnlearnMethod.ORACLE)] for d, s in cells]

        assert sum(r.lens1.m2 < 0 for r in finetune) >= 8
        assert abs(np.mean([r.output.mia_balanced_acc for r in finetune]) - 0.5) <= 0.05
        for ft, orc in zip(finetune, oracle):
            assert abs(ft.output.retain_acc - orc.output.retain_acc) <= 0.02


@pytest.mark.slow
class TestDeterminism:
    """Byte-level reproducibility of full runs."""

    def test_threads_do_not_change_outputs(self, tmp_path):
        """Test runs with 1 and 4 threads write identical records and reports."""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({
            "datasets": [
                {"name": "alpha", "synthetic": {"n": 400, "seed": 1}},
                {"name": "beta", "synthetic": {"n": 400, "seed": 2, "memorization_strength": 1.0}},
            ],
            "methods": ["NegGradPlus", "SCRUB", "oracle"],
            "forget_fractions": [0.05],
            "seeds": {"train_seeds": [0, 1, 2]},
            "training": {"epochs": 20},
        }))

        for threads in ("1", "4"):
            out = tmp_path / f"t{threads}"
            assert main(["run", "-c", str(path), "-o", str(out), "-t", threads]) == EXIT_OK

        for name in (RECORDS_FILE, REPORT_FILE):
            assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t4" / name).read_bytes()


if __name__ == "__main__":
    pytest.main([__file__, "-v", "-m", "slow"])
