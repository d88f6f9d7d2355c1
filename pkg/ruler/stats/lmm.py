"""
Random-intercept linear mixed model fitted by REML.

    y_ij = beta0 + u_i + e_ij,   u_i ~ N(0, sigma_u2),   e_ij ~ N(0, sigma_e2)

The REML log-likelihood is profiled over lambda = sigma_u2 / sigma_e2 with
beta0 and sigma_e2 in closed form. A log-spaced grid brackets the maximum and
a bounded Brent search refines it. A maximum at the lambda = 0 boundary is a
singular fit; callers then fall back to the Wilcoxon test.
"""

import logging
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy import optimize, stats

from ruler.core.errors import DegenerateVarianceError, NonFiniteInputError, TooFewGroupsError

logger = logging.getLogger("ruler.stats.lmm")

LAMBDA_MIN = 1e-10
LAMBDA_MAX = 1e6
GRID_POINTS = 400
LOG_TOL = 1e-10


class LmmFit(BaseModel):
    """REML estimates and the Wald test of the fixed intercept."""
    intercept: float
    se_intercept: float = Field(gt=0.0)
    wald_z: float
    p_wald: float = Field(ge=0.0, le=1.0)
    sigma_u2: float = Field(ge=0.0)
    sigma_e2: float = Field(gt=0.0)
    icc: float = Field(ge=0.0, lt=1.0)
    singular: bool
    n_groups: int = Field(ge=2)
    n_obs: int = Field(ge=2)
    lam: float = Field(ge=0.0, description="sigma_u2 / sigma_e2")
    reml_loglik: float


class _GroupSummary:
    """Sufficient statistics of a one-way layout."""

    def __init__(self, values: np.ndarray, group_ids: Sequence):
        _, inverse = np.unique(np.asarray(group_ids), return_inverse=True)
        self.sizes = np.bincount(inverse).astype(np.float64)
        self.means = np.bincount(inverse, weights=values) / self.sizes
        self.ss_within = float(np.sum((values - self.means[inverse]) ** 2))
        self.n_obs = int(values.size)
        self.n_groups = int(self.sizes.size)

    def profile(self, lam: float) -> tuple[float, float, float, float]:
        """(beta, sigma_e2, sum of weights, REML log-likelihood) at lam."""
        weights = self.sizes / (1.0 + self.sizes * lam)
        w_sum = float(weights.sum())
        beta = float(np.dot(weights, self.means) / w_sum)
        q = self.ss_within + float(np.dot(weights, (self.means - beta) ** 2))
        sigma_e2 = q / (self.n_obs - 1)
        loglik = -0.5 * (
            (self.n_obs - 1) * np.log(sigma_e2)
            + float(np.sum(np.log1p(self.sizes * lam)))
            + np.log(w_sum)
        )
        return beta, sigma_e2, w_sum, float(loglik)


def reml_loglik(values: Sequence[float], group_ids: Sequence, lam: float) -> float:
    """Profiled REML log-likelihood (up to a constant) at a variance ratio."""
    y = np.asarray(values, dtype=np.float64).reshape(-1)
    return _GroupSummary(y, group_ids).profile(lam)[3]


def lmm_reml(values: Sequence[float], group_ids: Sequence) -> LmmFit:
    """
    Fit the random-intercept model by REML.

    Args:
        values: Observations
        group_ids: Group label per observation (datasets, typically)

    Returns:
        LmmFit; singular fits have sigma_u2 = icc = 0

    Raises:
        TooFewGroupsError: Fewer than two groups
        NonFiniteInputError: NaN or Inf in values
        DegenerateVarianceError: Zero within-group variation
    """
    y = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise NonFiniteInputError("LMM input contains NaN or Inf")
    if len(group_ids) != y.size:
        raise NonFiniteInputError(f"{y.size} values but {len(group_ids)} group labels")

    g = _GroupSummary(y, group_ids)
    if g.n_groups < 2:
        raise TooFewGroupsError(f"Mixed model needs at least two groups, got {g.n_groups}")
    if g.ss_within <= 0.0:
        raise DegenerateVarianceError("Within-group variance is zero")

    def neg(log_lam: float) -> float:
        return -g.profile(float(np.exp(log_lam)))[3]

    grid = np.linspace(np.log(LAMBDA_MIN), np.log(LAMBDA_MAX), GRID_POINTS)
    scores = np.array([neg(x) for x in grid])
    i = int(np.argmin(scores))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    found = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                     options={"xatol": LOG_TOL})
    log_lam = float(found.x) if found.fun <= scores[i] else float(grid[i])
    lam = float(np.exp(log_lam))

    boundary = g.profile(0.0)
    interior = g.profile(lam)
    singular = lam <= LAMBDA_MIN * (1.0 + 1e-9) or boundary[3] >= interior[3]
    if singular:
        lam = 0.0
        logger.debug("REML maximum at the sigma_u2 = 0 boundary (singular fit)")

    beta, sigma_e2, _, loglik = g.profile(lam)
    sigma_u2 = lam * sigma_e2
    info = float(np.sum(g.sizes / (sigma_e2 + g.sizes * sigma_u2)))
    se = info ** -0.5
    z = beta / se
    return LmmFit(
        intercept=beta,
        se_intercept=se,
        wald_z=z,
        p_wald=float(min(1.0, 2.0 * stats.norm.sf(abs(z)))),
        sigma_u2=sigma_u2,
        sigma_e2=sigma_e2,
        icc=sigma_u2 / (sigma_u2 + sigma_e2),
        singular=singular,
        n_groups=g.n_groups,
        n_obs=g.n_obs,
        lam=lam,
        reml_loglik=loglik,
    )
