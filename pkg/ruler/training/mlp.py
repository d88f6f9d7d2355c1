"""
Tabular MLP: d -> 128 -> 128 -> 2 with ReLU and inverted dropout after each
hidden layer, trained full-batch with Adam in float64.

The penultimate representation is the second ReLU output in eval mode.
"""

import hashlib
import logging
from typing import Any, Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ruler.core.config import TrainConfig
from ruler.core.errors import NonFiniteLossError
from ruler.core.rng import fingerprint_indices, stream
from ruler.embedding.matrix import EmbeddingMatrix, ModelRole
from ruler.training.losses import cross_entropy, per_record_cross_entropy
from ruler.training.optim import AdamState, adam_step

logger = logging.getLogger("ruler.training")

N_CLASSES = 2
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")

Masks = Optional[Tuple[np.ndarray, np.ndarray]]


class Activations(NamedTuple):
    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    a2: np.ndarray
    logits: np.ndarray


class MlpModel(BaseModel):
    """Immutable trained weights plus provenance."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    params: List[np.ndarray] = Field(description="W1, b1, W2, b2, W3, b3")
    init_seed: int = Field(ge=0)
    dropout_rate: float = Field(default=0.2, ge=0.0, lt=1.0)
    role: ModelRole = Field(default=ModelRole.ORIGINAL)
    trained_on: str = Field(default="", description="Fingerprint of the training indices")
    loss_history: List[float] = Field(default_factory=list)

    @field_validator("params", mode="before")
    @classmethod
    def freeze_params(cls, v: Any) -> List[np.ndarray]:
        if len(v) != len(PARAM_NAMES):
            raise ValueError(f"expected {len(PARAM_NAMES)} parameter arrays, got {len(v)}")
        frozen = []
        for p in v:
            arr = np.array(p, dtype=np.float64, copy=True)
            arr.setflags(write=False)
            frozen.append(arr)
        return frozen

    @property
    def d(self) -> int:
        return int(self.params[0].shape[0])

    @property
    def hidden(self) -> int:
        return int(self.params[0].shape[1])

    def fingerprint(self) -> str:
        """Hash of the weights."""
        h = hashlib.sha256()
        for p in self.params:
            h.update(p.astype("<f8").tobytes())
        return h.hexdigest()[:16]

    def replace(self, params: List[np.ndarray], **updates: Any) -> "MlpModel":
        """Copy with new weights and optional field updates."""
        fields = self.model_dump(exclude={"params"})
        fields.update(updates)
        return MlpModel(params=params, **fields)


def init_params(d: int, hidden: int, seed: int, purpose: str = "init") -> List[np.ndarray]:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, keyed by seed only."""
    rng = stream(purpose, "", seed)
    params = []
    for fan_in, fan_out in ((d, hidden), (hidden, hidden), (hidden, N_CLASSES)):
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(rng.uniform(-bound, bound, size=fan_out))
    return params


def draw_masks(rng: np.random.Generator, n: int, hidden: int, rate: float) -> Masks:
    """Inverted-dropout masks for both hidden layers, or None when rate is 0."""
    if rate <= 0.0:
        return None
    keep = 1.0 - rate
    return tuple(  # type: ignore[return-value]
        (rng.random((n, hidden)) < keep).astype(np.float64) / keep for _ in range(2)
    )


def forward(params: Sequence[np.ndarray], x: np.ndarray, masks: Masks = None) -> Activations:
    """Forward pass; masks=None is eval mode."""
    w1, b1, w2, b2, w3, b3 = params
    z1 = x @ w1 + b1
    a1 = np.maximum(z1, 0.0)
    if masks is not None:
        a1 = a1 * masks[0]
    z2 = a1 @ w2 + b2
    h2 = np.maximum(z2, 0.0)
    a2 = h2 * masks[1] if masks is not None else h2
    return Activations(x, z1, a1, z2, h2, a2, a2 @ w3 + b3)


def backward(
    params: Sequence[np.ndarray],
    act: Activations,
    dlogits: np.ndarray,
    masks: Masks = None,
) -> List[np.ndarray]:
    """Gradients of the loss whose logit-gradient is dlogits."""
    _, _, w2, _, w3, _ = params
    d_w3 = act.a2.T @ dlogits
    d_b3 = dlogits.sum(axis=0)
    da2 = dlogits @ w3.T
    dh2 = da2 * masks[1] if masks is not None else da2
    dz2 = dh2 * (act.z2 > 0)
    d_w2 = act.a1.T @ dz2
    d_b2 = dz2.sum(axis=0)
    da1 = dz2 @ w2.T
    if masks is not None:
        da1 = da1 * masks[0]
    dz1 = da1 * (act.z1 > 0)
    d_w1 = act.x.T @ dz1
    d_b1 = dz1.sum(axis=0)
    return [d_w1, d_b1, d_w2, d_b2, d_w3, d_b3]


BackwardFn = Callable[[Sequence[np.ndarray], Activations, np.ndarray, Masks], List[np.ndarray]]


def loss_and_gradients(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    backward_fn: BackwardFn = backward,
) -> tuple[float, List[np.ndarray]]:
    """Eval-mode mean cross-entropy and its parameter gradients."""
    act = forward(model.params, x)
    loss, dlogits = cross_entropy(act.logits, y)
    return loss, backward_fn(model.params, act, dlogits, None)


def train(
    features: np.ndarray,
    labels: np.ndarray,
    train_idx: Sequence[int],
    config: TrainConfig,
    init_seed: int,
    role: ModelRole = ModelRole.ORIGINAL,
) -> MlpModel:
    """
    Full-batch Adam training on the selected rows.

    Models trained with one init_seed start from identical weights whatever
    rows they see, which is what pairs an original with its oracle.

    Args:
        features: Standardised features of the whole dataset
        labels: Labels in {0, 1}
        train_idx: Rows to train on
        config: Optimiser and architecture settings
        init_seed: Seed for the initial weights and dropout masks
        role: ORIGINAL (full training set) or ORACLE (retain set)

    Returns:
        Trained model with per-epoch loss history

    Raises:
        NonFiniteLossError: If the loss diverges
    """
    idx = np.asarray(train_idx, dtype=np.int64)
    x = np.asarray(features, dtype=np.float64)[idx]
    y = np.asarray(labels, dtype=np.int64)[idx]

    params = init_params(x.shape[1], config.hidden, init_seed)
    state = AdamState.zeros_like(params)
    dropout_rng = stream("dropout", "train", init_seed)
    history: List[float] = []

    for epoch in range(config.epochs):
        masks = draw_masks(dropout_rng, x.shape[0], config.hidden, config.dropout_rate)
        act = forward(params, x, masks)
        loss, dlogits = cross_entropy(act.logits, y)
        if not np.isfinite(loss):
            raise NonFiniteLossError("train", epoch)
        grads = backward(params, act, dlogits, masks)
        params, state = adam_step(
            params, grads, state, config.lr, config.beta1, config.beta2, config.eps
        )
        history.append(loss)

    if history:
        logger.debug(f"Trained {role.value} seed={init_seed}: loss {history[0]:.4f} -> {history[-1]:.4f}")
    return MlpModel(
        params=params,
        init_seed=init_seed,
        dropout_rate=config.dropout_rate,
        role=role,
        trained_on=fingerprint_indices(idx.tolist()),
        loss_history=history,
    )


def logits(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Eval-mode logits."""
    return forward(model.params, np.asarray(features, dtype=np.float64)).logits


def predict(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Predicted class per row."""
    return np.argmax(logits(model, features), axis=1)


def per_record_loss(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Eval-mode cross-entropy per row."""
    return per_record_cross_entropy(logits(model, features), np.asarray(labels, dtype=np.int64))


def extract_embeddings(model: MlpModel, features: np.ndarray) -> EmbeddingMatrix:
    """Penultimate (second ReLU) activations in eval mode, not normalised."""
    act = forward(model.params, np.asarray(features, dtype=np.float64))
    return EmbeddingMatrix(data=act.h2, normalized=False, model_role=model.role)


def _activation_pattern(params: Sequence[np.ndarray], x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    act = forward(params, x)
    return act.z1 > 0, act.z2 > 0


def grad_check(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    n_params: int = 100,
    step: float = 1e-5,
    seed: int = 0,
    backward_fn: BackwardFn = backward,
) -> float:
    """
    Maximum relative error between analytic and central-difference gradients.

    Parameters are sampled at random; a parameter whose perturbation flips a
    ReLU on the batch is skipped, since the loss is not differentiable there.

    Returns:
        max |a - n| / max(|a|, |n|, 1e-6) over the sampled parameters
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _, analytic = loss_and_gradients(model, x, y, backward_fn)
    params = [p.copy() for p in model.params]
    base_pattern = _activation_pattern(params, x)

    sizes = [p.size for p in params]
    offsets = np.cumsum([0] + sizes)
    rng = stream("grad-check", "", seed)

    worst = 0.0
    checked = 0
    for flat in rng.permutation(offsets[-1]):
        if checked >= n_params:
            break
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        i = int(flat - offsets[k])
        original = params[k].flat[i]

        params[k].flat[i] = original + step
        plus_pattern = _activation_pattern(params, x)
        loss_plus = cross_entropy(forward(params, x).logits, y)[0]
        params[k].flat[i] = original - step
        minus_pattern = _activation_pattern(params, x)
        loss_minus = cross_entropy(forward(params, x).logits, y)[0]
        params[k].flat[i] = original

        flipped = any(
            not (np.array_equal(b, p) and np.array_equal(b, m))
            for b, p, m in zip(base_pattern, plus_pattern, minus_pattern)
        )
        if flipped:
            continue

        numeric = (loss_plus - loss_minus) / (2.0 * step)
        a = float(analytic[k].flat[i])
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-6))
        checked += 1
    return worst
