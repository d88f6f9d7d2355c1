"""
Functional Adam.
"""

from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class AdamState(BaseModel):
    """First and second moments plus the step counter."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = Field(default=0, ge=0)

    @classmethod
    def zeros_like(cls, params: List[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: List[np.ndarray],
    grads: List[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[List[np.ndarray], AdamState]:
    """
    One bias-corrected Adam update.

    Returns:
        (new parameters, new state); inputs are not modified
    """
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)
