"""
Configuration management for RULER.

Handles datasets, seeds, training, unlearning, metric, statistics,
execution, sweep and calibration settings.
"""

import json
import os
import tomllib
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ruler.core.errors import ConfigError
from ruler.core.rng import stable_hash

load_dotenv()


class DatasetKind(str, Enum):
    """Where a dataset comes from."""
    SYNTHETIC = "synthetic"
    CSV = "csv"


class BinarizationRule(str, Enum):
    """How multi-class labels are reduced to {0, 1}."""
    NONE = "none"
    MAJORITY_VS_REST = "majority_vs_rest"
    CLASS_VS_REST = "class_vs_rest"


class UnlearnMethod(str, Enum):
    """Unlearning methods. ORACLE is the control cell where the oracle stands in."""
    GA = "GA"
    NEGGRAD_PLUS = "NegGradPlus"
    FINETUNE = "FineTune"
    SCRUB = "SCRUB"
    BAD_TEACHER = "BadTeacher"
    ORACLE = "oracle"


class BaselineKind(str, Enum):
    """Retain-set baseline used by M2."""
    MEDIAN = "median"
    MEAN = "mean"


class WilcoxonPooling(str, Enum):
    """Which observations feed the one-sample Wilcoxon test."""
    DATASET_MEANS = "dataset_means"
    OBSERVATIONS = "observations"


class SweepAxis(str, Enum):
    """Axes a sweep may vary."""
    LR_U = "lr_u"
    FORGET_SEED = "forget_seed"
    BASELINE_KIND = "baseline_kind"


DEFAULT_UNLEARN_EPOCHS: Dict[UnlearnMethod, int] = {
    UnlearnMethod.GA: 5,
    UnlearnMethod.NEGGRAD_PLUS: 10,
    UnlearnMethod.FINETUNE: 10,
    UnlearnMethod.SCRUB: 10,
    UnlearnMethod.BAD_TEACHER: 10,
    UnlearnMethod.ORACLE: 0,
}


class SyntheticConfig(BaseModel):
    """Two-blob synthetic dataset parameters."""
    n: int = Field(default=1000, ge=50)
    d: int = Field(default=10, ge=1)
    class_sep: float = Field(default=2.0, ge=0.0)
    memorization_strength: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0)


class DatasetConfig(BaseModel):
    """One dataset entry."""
    name: str = Field(min_length=1)
    kind: DatasetKind = Field(default=DatasetKind.SYNTHETIC)
    path: Optional[Path] = Field(default=None)
    label_column: Optional[str] = Field(default=None)
    binarization: BinarizationRule = Field(default=BinarizationRule.MAJORITY_VS_REST)
    positive_class: Optional[str] = Field(default=None)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)

    @field_validator("path", mode="before")
    @classmethod
    def validate_path(cls, v: Any) -> Optional[Path]:
        return Path(v) if v is not None else None


class SeedConfig(BaseModel):
    """Seeds for every seeded draw of the protocol."""
    train_seeds: List[int] = Field(default_factory=lambda: list(range(10)))
    unlearn_seed: int = Field(default=100, ge=0)
    split_seed: int = Field(default=999, ge=0)
    forget_seed: int = Field(default=999, ge=0)
    retain_subsample_seed: int = Field(default=42, ge=0)
    m4_cap_seed: int = Field(default=42, ge=0)
    teacher_seed: int = Field(default=100, ge=0)

    @field_validator("train_seeds")
    @classmethod
    def validate_train_seeds(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("at least one training seed is required")
        if any(s < 0 for s in v):
            raise ValueError("training seeds must be non-negative")
        if len(set(v)) != len(v):
            raise ValueError("training seeds must be unique")
        return v


class TrainConfig(BaseModel):
    """Full-batch Adam training of the tabular MLP."""
    lr: float = Field(default=1e-3, gt=0.0)
    epochs: int = Field(default=50, ge=0)
    hidden: int = Field(default=128, ge=1)
    dropout_rate: float = Field(default=0.2, ge=0.0, lt=1.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)

    def config_hash(self) -> str:
        """Stable hash used in model cache keys."""
        return stable_hash(self.model_dump_json())[:16]


class UnlearnSettings(BaseModel):
    """Run-wide unlearning hyperparameters shared by all methods."""
    lr_u: float = Field(default=5e-4, gt=0.0)
    alpha: float = Field(default=0.6, ge=0.0, le=1.0)
    temperature: float = Field(default=2.0, gt=0.0)
    epochs: Dict[UnlearnMethod, int] = Field(default_factory=dict)

    def epochs_for(self, method: UnlearnMethod) -> int:
        """Configured epochs for a method, falling back to the protocol default."""
        return self.epochs.get(method, DEFAULT_UNLEARN_EPOCHS[method])

    def for_method(
        self,
        method: UnlearnMethod,
        unlearn_seed: int,
        teacher_seed: int,
    ) -> "UnlearnConfig":
        """Build the per-cell unlearning configuration."""
        return UnlearnConfig(
            method=method,
            lr_u=self.lr_u,
            epochs=self.epochs_for(method),
            alpha=self.alpha,
            temperature=self.temperature,
            unlearn_seed=unlearn_seed,
            teacher_seed=teacher_seed,
        )


class UnlearnConfig(BaseModel):
    """Unlearning configuration for one cell."""
    method: UnlearnMethod
    lr_u: float = Field(default=5e-4, gt=0.0)
    epochs: int = Field(default=10, ge=0)
    alpha: float = Field(default=0.6, ge=0.0, le=1.0)
    temperature: float = Field(default=2.0, gt=0.0)
    unlearn_seed: int = Field(default=100, ge=0)
    teacher_seed: int = Field(default=100, ge=0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class MetricConfig(BaseModel):
    """Metric protocol constants."""
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    retain_subsample_size: int = Field(default=500, ge=1)
    m4_cap: int = Field(default=2000, ge=2)
    baseline_kind: BaselineKind = Field(default=BaselineKind.MEDIAN)
    mia_window: float = Field(default=0.05, gt=0.0, le=0.5)
    export_per_record_m4: bool = Field(default=False)


class StatsConfig(BaseModel):
    """Inference settings."""
    wilcoxon_pooling: WilcoxonPooling = Field(default=WilcoxonPooling.DATASET_MEANS)
    exact_cutoff: int = Field(default=20, ge=0, le=25)
    significance: float = Field(default=0.05, gt=0.0, lt=1.0)
    pairwise_metrics: List[str] = Field(
        default_factory=lambda: ["M2", "M4", "MIA", "retain_acc"]
    )


class ExecutionConfig(BaseModel):
    """Where and how a run executes."""
    threads: int = Field(default=1, ge=1, le=256)
    cache_dir: Optional[Path] = Field(default=None)
    out_dir: Path = Field(default=Path("ruler-out"))
    write_csv: bool = Field(default=True)
    write_markdown: bool = Field(default=True)

    @field_validator("cache_dir", "out_dir", mode="before")
    @classmethod
    def validate_path(cls, v: Any) -> Optional[Path]:
        return Path(v) if v is not None else None


class SweepConfig(BaseModel):
    """Values visited by each sweep axis."""
    lr_values: List[float] = Field(default_factory=lambda: [1e-4, 5e-4, 1e-3])
    reference_lr: float = Field(default=5e-4, gt=0.0)
    forget_seeds: List[int] = Field(default_factory=lambda: [999, 1000, 1001, 1002, 1003])
    baseline_kinds: List[BaselineKind] = Field(
        default_factory=lambda: [BaselineKind.MEDIAN, BaselineKind.MEAN]
    )

    @field_validator("lr_values")
    @classmethod
    def validate_lr_values(cls, v: List[float]) -> List[float]:
        if not v or any(lr <= 0 for lr in v):
            raise ValueError("learning rates must be positive and non-empty")
        return v


class CalibrationConfig(BaseModel):
    """Oracle-pair null calibration and seed sanity checks."""
    oracle_seeds: List[int] = Field(default_factory=lambda: list(range(10)))
    forget_fraction: float = Field(default=0.05, gt=0.0, lt=1.0)
    teacher_seeds: List[int] = Field(default_factory=lambda: [100, 101, 102])
    paired_seed_check: bool = Field(default=True)


class RulerConfig(BaseModel):
    """Master configuration for a RULER run."""
    datasets: List[DatasetConfig] = Field(
        default_factory=lambda: [DatasetConfig(name="synthetic")]
    )
    methods: List[UnlearnMethod] = Field(
        default_factory=lambda: [
            UnlearnMethod.GA,
            UnlearnMethod.NEGGRAD_PLUS,
            UnlearnMethod.FINETUNE,
            UnlearnMethod.SCRUB,
        ]
    )
    forget_fractions: List[float] = Field(default_factory=lambda: [0.01, 0.05, 0.10])
    seeds: SeedConfig = Field(default_factory=SeedConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    unlearning: UnlearnSettings = Field(default_factory=UnlearnSettings)
    metrics: MetricConfig = Field(default_factory=MetricConfig)
    stats: StatsConfig = Field(default_factory=StatsConfig)
    execution: ExecutionConfig = Field(default_factory=ExecutionConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    debug: bool = Field(default=False)
    log_level: str = Field(default="INFO")

    @field_validator("forget_fractions")
    @classmethod
    def validate_fractions(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("at least one forget fraction is required")
        for ff in v:
            if not 0.0 < ff < 1.0:
                raise ValueError(f"forget fraction {ff} outside (0, 1)")
        return v

    @model_validator(mode="after")
    def validate_unique_datasets(self) -> "RulerConfig":
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ValueError("dataset names must be unique")
        return self

    @classmethod
    def from_file(cls, path: Path) -> "RulerConfig":
        """
        Load configuration from a JSON, YAML or TOML file.

        Args:
            path: Configuration file path

        Returns:
            Validated configuration with environment overrides applied

        Raises:
            ConfigError: If the file cannot be read or violates the schema
        """
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}")

        suffix = path.suffix.lower()
        try:
            if suffix == ".json":
                data = json.loads(text)
            elif suffix in (".yaml", ".yml"):
                data = yaml.safe_load(text) or {}
            elif suffix == ".toml":
                data = tomllib.loads(text)
            else:
                raise ConfigError(f"Unsupported config format: {suffix}")
        except (json.JSONDecodeError, yaml.YAMLError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Cannot parse config {path}: {e}")

        return cls.from_dict(data).apply_env()

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RulerConfig":
        """Validate a plain mapping, converting schema errors to ConfigError."""
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration: {e}")

    @classmethod
    def from_env(cls) -> "RulerConfig":
        """Create the default configuration with environment overrides."""
        return cls().apply_env()

    def apply_env(self) -> "RulerConfig":
        """Return a copy with RULER_* environment variables applied."""
        updates: Dict[str, Any] = {}
        execution = self.execution.model_copy()

        cache_dir = os.getenv("RULER_CACHE_DIR")
        if cache_dir:
            execution.cache_dir = Path(cache_dir)
        threads = os.getenv("RULER_THREADS")
        if threads:
            try:
                execution.threads = max(1, int(threads))
            except ValueError:
                raise ConfigError(f"RULER_THREADS must be an integer, got {threads!r}")
        updates["execution"] = execution

        log_level = os.getenv("RULER_LOG_LEVEL")
        if log_level:
            updates["log_level"] = log_level.upper()

        return self.model_copy(update=updates)

    def with_seed_offset(self, offset: int) -> "RulerConfig":
        """Shift every training seed by offset."""
        if offset == 0:
            return self
        seeds = self.seeds.model_copy(
            update={"train_seeds": [s + offset for s in self.seeds.train_seeds]}
        )
        return self.model_copy(update={"seeds": seeds})

    def dataset(self, name: str) -> DatasetConfig:
        """Look up a dataset entry by name."""
        for entry in self.datasets:
            if entry.name == name:
                return entry
        raise ConfigError(f"Unknown dataset: {name}")

    def validate_for_operation(self) -> List[str]:
        """Validate configuration, returning list of issues."""
        issues = []
        if not self.datasets:
            issues.append("No datasets configured.")
        if not self.methods:
            issues.append("No unlearning methods configured.")
        for entry in self.datasets:
            if entry.kind == DatasetKind.CSV:
                if entry.path is None:
                    issues.append(f"Dataset '{entry.name}' is CSV but has no path.")
                elif not entry.path.exists():
                    issues.append(f"Dataset '{entry.name}': file {entry.path} not found.")
                if not entry.label_column:
                    issues.append(f"Dataset '{entry.name}' is CSV but has no label_column.")
            if (
                entry.binarization == BinarizationRule.CLASS_VS_REST
                and entry.positive_class is None
            ):
                issues.append(
                    f"Dataset '{entry.name}' uses class_vs_rest without positive_class."
                )
        if len(set(self.methods)) != len(self.methods):
            issues.append("Methods list contains duplicates.")
        return issues
