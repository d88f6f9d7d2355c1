"""
Wilcoxon signed-rank tests and the rank-biserial effect size.

Zero differences are dropped, ties get midranks. Up to the exact cutoff the
two-sided p-value comes from the full sign-flip distribution of the observed
midranks; above it a tie-corrected normal approximation with continuity
correction is used. W is min(W+, W-), so r_rb is never negative and the
direction of an effect is carried by the sign of the metric itself.
"""

from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from ruler.core.errors import AllZeroDifferencesError, LengthMismatchError, NonFiniteInputError

EXACT_CUTOFF = 20


class WilcoxonMethod(str, Enum):
    AUTO = "auto"
    EXACT = "exact"
    APPROX = "approx"


class WilcoxonResult(BaseModel):
    """Outcome of one signed-rank test."""
    w_plus: float
    w_minus: float
    w: float
    n_effective: int = Field(ge=1)
    p_two_sided: float = Field(ge=0.0, le=1.0)
    exact: bool
    r_rb: float
    z: Optional[float] = None


def rank_biserial(w: float, n: int) -> float:
    """1 - 4W / [n(n+1)]."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    total = n * (n + 1) / 2.0
    if not 0.0 <= w <= total:
        raise ValueError(f"rank sum {w} outside [0, {total}]")
    return 1.0 - 4.0 * w / (n * (n + 1))


def effect_size_label(r: float) -> str:
    """Conventional magnitude label for |r|."""
    r = abs(r)
    if r >= 0.5:
        return "large"
    if r >= 0.3:
        return "medium"
    if r >= 0.1:
        return "small"
    return "negligible"


def _exact_p(doubled_ranks: np.ndarray, doubled_w: int) -> float:
    # counts[s] = number of sign patterns whose doubled W+ equals s
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    at_most = int(counts[:doubled_w + 1].sum())
    return min(1.0, 2.0 * at_most / 2 ** doubled_ranks.size)


def _approx_p(w: float, ranks: np.ndarray) -> tuple[float, float]:
    n = ranks.size
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = min(0.0, (w - mean + 0.5) / np.sqrt(var))
    return min(1.0, 2.0 * float(stats.norm.cdf(z))), float(z)


def wilcoxon_one_sample(
    values: Sequence[float],
    null_value: float = 0.0,
    method: WilcoxonMethod = WilcoxonMethod.AUTO,
    exact_cutoff: int = EXACT_CUTOFF,
) -> WilcoxonResult:
    """
    Two-sided one-sample signed-rank test of values against null_value.

    Args:
        values: Observations
        null_value: Hypothesised centre
        method: auto (exact up to the cutoff), exact, or approx
        exact_cutoff: Largest n_effective tested exactly under auto

    Returns:
        WilcoxonResult

    Raises:
        AllZeroDifferencesError: If no difference is non-zero
        NonFiniteInputError: If values contain NaN or Inf
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)) or not np.isfinite(null_value):
        raise NonFiniteInputError("Wilcoxon input contains NaN or Inf")
    d = x - null_value
    d = d[d != 0.0]
    if d.size == 0:
        raise AllZeroDifferencesError("All differences are zero")

    ranks = stats.rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    n = int(d.size)

    use_exact = method == WilcoxonMethod.EXACT or (
        method == WilcoxonMethod.AUTO and n <= exact_cutoff
    )
    z: Optional[float] = None
    if use_exact:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        p = _exact_p(doubled, int(round(2.0 * w)))
    else:
        p, z = _approx_p(w, ranks)

    return WilcoxonResult(
        w_plus=w_plus,
        w_minus=w_minus,
        w=w,
        n_effective=n,
        p_two_sided=p,
        exact=use_exact,
        r_rb=rank_biserial(w, n),
        z=z,
    )


def wilcoxon_paired(
    a: Sequence[float],
    b: Sequence[float],
    method: WilcoxonMethod = WilcoxonMethod.AUTO,
    exact_cutoff: int = EXACT_CUTOFF,
) -> WilcoxonResult:
    """Paired signed-rank test on a - b."""
    a_arr = np.asarray(a, dtype=np.float64).reshape(-1)
    b_arr = np.asarray(b, dtype=np.float64).reshape(-1)
    if a_arr.size != b_arr.size:
        raise LengthMismatchError(f"Paired samples differ in length: {a_arr.size} vs {b_arr.size}")
    if a_arr.size < 2:
        raise LengthMismatchError("Paired test needs at least two pairs")
    return wilcoxon_one_sample(a_arr - b_arr, 0.0, method=method, exact_cutoff=exact_cutoff)
