"""
Metrics: oracle-comparative (M1-M3), oracle-free (M4) and output-level.
"""

from ruler.metrics.lens1 import Lens1Result, baseline_sensitivity, m1, m2, m3, retain_subsample
from ruler.metrics.lens2 import Lens2Result, m4, retain_pool, s_forget, s_retain_loo
from ruler.metrics.output import (
    LossVector,
    OutputReport,
    Population,
    accuracy,
    mia_threshold_attack,
    output_report,
    pass_window,
    within_window,
)

__all__ = [
    "Lens1Result",
    "baseline_sensitivity",
    "m1",
    "m2",
    "m3",
    "retain_subsample",
    "Lens2Result",
    "m4",
    "retain_pool",
    "s_forget",
    "s_retain_loo",
    "LossVector",
    "OutputReport",
    "Population",
    "accuracy",
    "mia_threshold_attack",
    "output_report",
    "pass_window",
    "within_window",
]
