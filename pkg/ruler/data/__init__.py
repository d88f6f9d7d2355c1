"""
Data pipeline: ingestion, synthetic datasets, splits, forget sets and standardisation.
"""

from ruler.data.dataset import TabularDataset, load_csv, make_synthetic
from ruler.data.partition import (
    PartitionSpec,
    build_partition,
    forget_size,
    sample_forget_set,
    stratified_split,
)
from ruler.data.standardize import Standardizer, apply_standardizer, fit_standardizer

__all__ = [
    "TabularDataset",
    "load_csv",
    "make_synthetic",
    "PartitionSpec",
    "build_partition",
    "forget_size",
    "sample_forget_set",
    "stratified_split",
    "Standardizer",
    "apply_standardizer",
    "fit_standardizer",
]
