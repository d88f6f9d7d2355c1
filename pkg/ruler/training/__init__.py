"""
Training harness: tabular MLP, Adam, distillation losses, unlearning methods and model cache.
"""

from ruler.training.cache import ModelCache, cache_key, params_from_bytes, params_to_bytes
from ruler.training.losses import cross_entropy, distillation_kl, per_record_cross_entropy
from ruler.training.mlp import (
    MlpModel,
    extract_embeddings,
    grad_check,
    init_params,
    loss_and_gradients,
    per_record_loss,
    predict,
    train,
)
from ruler.training.optim import AdamState, adam_step
from ruler.training.unlearning import random_teacher_params, unlearn

__all__ = [
    "ModelCache",
    "cache_key",
    "params_from_bytes",
    "params_to_bytes",
    "cross_entropy",
    "distillation_kl",
    "per_record_cross_entropy",
    "MlpModel",
    "extract_embeddings",
    "grad_check",
    "init_params",
    "loss_and_gradients",
    "per_record_loss",
    "predict",
    "train",
    "AdamState",
    "adam_step",
    "random_teacher_params",
    "unlearn",
]
