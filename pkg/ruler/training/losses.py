"""
Softmax losses with gradients with respect to the logits.

All losses are batch means. distillation_kl follows the usual
kl_div(log_softmax(s / T), softmax(t / T)) * T**2 convention, so its
gradient is T * (p_s - q_t) / N and at T = 1 it is plain KL(q_t || p_s).
"""

import numpy as np
from scipy.special import log_softmax, softmax


def per_record_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Cross-entropy of each row."""
    logp = log_softmax(logits, axis=1)
    return -logp[np.arange(labels.size), labels]


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient."""
    n = labels.size
    losses = per_record_cross_entropy(logits, labels)
    grad = softmax(logits, axis=1)
    grad[np.arange(n), labels] -= 1.0
    return float(losses.mean()), grad / n


def distillation_kl(
    student_logits: np.ndarray,
    teacher_logits: np.ndarray,
    temperature: float,
) -> tuple[float, np.ndarray]:
    """Temperature-softened KL(teacher || student) scaled by T**2, and its gradient."""
    t = temperature
    n = student_logits.shape[0]
    log_p = log_softmax(student_logits / t, axis=1)
    log_q = log_softmax(teacher_logits / t, axis=1)
    q = np.exp(log_q)
    kl = float(np.sum(q * (log_q - log_p)) / n) * t * t
    grad = t * (np.exp(log_p) - q) / n
    return kl, grad
