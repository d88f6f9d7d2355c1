"""
Unlearning methods. Every method starts from the original model, runs
full-batch Adam at lr_u and returns a new model tagged UNLEARNED.

Objectives (minimised; CE = cross-entropy, KL = temperature-softened
distillation KL, r = retain set, f = forget set):

    GA          -CE_f
    NegGradPlus alpha * CE_r - (1 - alpha) * CE_f
    FineTune    CE_r
    SCRUB       alpha * (KL_r(theta_o) + CE_r) - (1 - alpha) * KL_f(theta_o)
    BadTeacher  alpha * (KL_r(random) + CE_r) + (1 - alpha) * KL_f(random)

SCRUB's teacher is the frozen original; BadTeacher's is a frozen randomly
initialised network drawn from teacher_seed.
"""

import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from ruler.core.config import UnlearnConfig, UnlearnMethod
from ruler.core.errors import ConfigError, NonFiniteLossError, WrongStartingModelError
from ruler.core.rng import stream
from ruler.data.partition import PartitionSpec
from ruler.embedding.matrix import ModelRole
from ruler.training.losses import cross_entropy, distillation_kl
from ruler.training.mlp import MlpModel, backward, draw_masks, forward, init_params
from ruler.training.optim import AdamState, adam_step

logger = logging.getLogger("ruler.training.unlearning")

# objective(student logits, labels, teacher logits) -> (loss, dlogits)
Objective = Callable[[np.ndarray, np.ndarray, Optional[np.ndarray]], tuple[float, np.ndarray]]


def random_teacher_params(d: int, hidden: int, teacher_seed: int) -> List[np.ndarray]:
    """Randomly initialised teacher weights for BadTeacher."""
    return init_params(d, hidden, teacher_seed, purpose="bad-teacher-init")


def _objectives(cfg: UnlearnConfig) -> Dict[str, Objective]:
    """Per-subset objectives for a method, keyed by 'retain' / 'forget'."""
    a, t = cfg.alpha, cfg.temperature

    def ce(weight: float) -> Objective:
        def f(s, y, _):
            loss, g = cross_entropy(s, y)
            return weight * loss, weight * g
        return f

    def kl_ce(weight: float) -> Objective:
        def f(s, y, teacher):
            kl, g_kl = distillation_kl(s, teacher, t)
            loss, g_ce = cross_entropy(s, y)
            return weight * (kl + loss), weight * (g_kl + g_ce)
        return f

    def kl(weight: float) -> Objective:
        def f(s, _, teacher):
            loss, g = distillation_kl(s, teacher, t)
            return weight * loss, weight * g
        return f

    method = cfg.method
    if method == UnlearnMethod.GA:
        return {"forget": ce(-1.0)}
    if method == UnlearnMethod.NEGGRAD_PLUS:
        return {"retain": ce(a), "forget": ce(-(1.0 - a))}
    if method == UnlearnMethod.FINETUNE:
        return {"retain": ce(1.0)}
    if method == UnlearnMethod.SCRUB:
        return {"retain": kl_ce(a), "forget": kl(-(1.0 - a))}
    if method == UnlearnMethod.BAD_TEACHER:
        return {"retain": kl_ce(a), "forget": kl(1.0 - a)}
    raise ConfigError(f"{method.value} is not an unlearning method")


def _teacher(model: MlpModel, cfg: UnlearnConfig) -> Optional[List[np.ndarray]]:
    if cfg.method == UnlearnMethod.SCRUB:
        return list(model.params)
    if cfg.method == UnlearnMethod.BAD_TEACHER:
        return random_teacher_params(model.d, model.hidden, cfg.teacher_seed)
    return None


def unlearn(
    model: MlpModel,
    features: np.ndarray,
    labels: np.ndarray,
    part: PartitionSpec,
    cfg: UnlearnConfig,
) -> MlpModel:
    """
    Apply one unlearning method to the original model.

    Args:
        model: The original model, trained on part.train
        features: Standardised features of the whole dataset
        labels: Labels in {0, 1}
        part: Partition naming retain and forget records
        cfg: Method and hyperparameters

    Returns:
        New model tagged UNLEARNED with the per-epoch objective history

    Raises:
        WrongStartingModelError: If model is not the original for this partition
        NonFiniteLossError: If the objective diverges
    """
    if model.role != ModelRole.ORIGINAL:
        raise WrongStartingModelError(
            f"Unlearning must start from the original model, got {model.role.value}"
        )
    if model.trained_on and model.trained_on != part.train_fingerprint():
        raise WrongStartingModelError("Original model was trained on a different partition")

    objectives = _objectives(cfg)
    teacher = _teacher(model, cfg)
    x_all = np.asarray(features, dtype=np.float64)
    y_all = np.asarray(labels, dtype=np.int64)
    index = {"retain": part.retain, "forget": part.forget}
    subsets = {name: (x_all[index[name]], y_all[index[name]]) for name in objectives}
    teacher_logits = {
        name: forward(teacher, x).logits if teacher is not None else None
        for name, (x, _) in subsets.items()
    }

    params = [p.copy() for p in model.params]
    state = AdamState.zeros_like(params)
    dropout_rng = stream("dropout", cfg.method.value, cfg.unlearn_seed)
    history: List[float] = []

    for epoch in range(cfg.epochs):
        total = 0.0
        grads = [np.zeros_like(p) for p in params]
        for name, objective in objectives.items():
            x, y = subsets[name]
            masks = draw_masks(dropout_rng, x.shape[0], model.hidden, model.dropout_rate)
            act = forward(params, x, masks)
            loss, dlogits = objective(act.logits, y, teacher_logits[name])
            total += loss
            for g, part_grad in zip(grads, backward(params, act, dlogits, masks)):
                g += part_grad
        if not np.isfinite(total):
            raise NonFiniteLossError(cfg.method.value, epoch)
        params, state = adam_step(params, grads, state, cfg.lr_u, cfg.beta1, cfg.beta2, cfg.eps)
        history.append(total)

    logger.debug(f"{cfg.method.value}: {cfg.epochs} epochs at lr_u={cfg.lr_u}")
    return model.replace(params, role=ModelRole.UNLEARNED, loss_history=history)
