"""
Benjamini-Hochberg step-up adjustment.
"""

from typing import Sequence

import numpy as np

from ruler.core.errors import NonFiniteInputError, PValueRangeError


def benjamini_hochberg(pvalues: Sequence[float]) -> np.ndarray:
    """
    BH-adjusted p-values in the input order.

    The i-th smallest p becomes min over j >= i of (m / j) * p_(j), clipped to 1.

    Raises:
        PValueRangeError: If any p lies outside [0, 1]
    """
    p = np.asarray(pvalues, dtype=np.float64).reshape(-1)
    if p.size == 0:
        return p.copy()
    if not np.all(np.isfinite(p)):
        raise NonFiniteInputError("p-values contain NaN or Inf")
    if np.any((p < 0.0) | (p > 1.0)):
        raise PValueRangeError("p-values must lie in [0, 1]")

    m = p.size
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * m / np.arange(1, m + 1)
    stepped = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.empty(m, dtype=np.float64)
    adjusted[order] = np.minimum(stepped, 1.0)
    return adjusted
