"""
Inference: signed-rank tests, rank-biserial effect size, REML mixed model, BH.
"""

from ruler.stats.lmm import LmmFit, lmm_reml, reml_loglik
from ruler.stats.multiple import benjamini_hochberg
from ruler.stats.wilcoxon import (
    WilcoxonMethod,
    WilcoxonResult,
    effect_size_label,
    rank_biserial,
    wilcoxon_one_sample,
    wilcoxon_paired,
)

__all__ = [
    "LmmFit",
    "lmm_reml",
    "reml_loglik",
    "benjamini_hochberg",
    "WilcoxonMethod",
    "WilcoxonResult",
    "effect_size_label",
    "rank_biserial",
    "wilcoxon_one_sample",
    "wilcoxon_paired",
]
