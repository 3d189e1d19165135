"""Sequence-at-a-time training with validation-patience early stopping.

Examples are shuffled each epoch and fed one by one (batch size 1); the
optimizer updates after every example. After each epoch the validation
loss is measured: the patience counter grows whenever it fails to beat
the best loss seen so far and resets on strict improvement. Training
stops at the patience limit or at max_epochs, whichever comes first, and
the returned model carries the parameters of the best-validation epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bilstm import BiLstmModel, backprop, bilstm_forward, cross_entropy_from_logits
from .errors import ValidationError
from .features import FeatureSequence
from .optimizers import make_optimizer


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    momentum: float = 0.90  # SGDM
    squared_grad_decay: float = 0.99  # RMSprop / ADAM
    grad_decay: float = 0.9  # ADAM
    epsilon: float = 1e-8
    max_epochs: int = 30
    patience: Optional[int] = 5
    dropout_rate: float = 0.5
    seed: int = 0
    clip_norm: Optional[float] = None  # off by default

    def validate(self) -> None:
        problems = []
        if self.learning_rate <= 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_epochs < 1:
            problems.append(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience is not None and self.patience < 1:
            problems.append(f"patience must be >= 1 when set, got {self.patience}")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            problems.append(f"clip_norm must be > 0 when set, got {self.clip_norm}")
        if problems:
            raise ValidationError("; ".join(problems))


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: Optional[float]
    val_accuracy: Optional[float]


@dataclass
class TrainHistory:
    epochs: List[EpochStats] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0


def _optimizer_kwargs(config: TrainConfig) -> dict:
    name = config.optimizer.lower()
    if name == "sgdm":
        return {"momentum": config.momentum}
    if name == "rmsprop":
        return {
            "squared_grad_decay": config.squared_grad_decay,
            "epsilon": config.epsilon,
        }
    return {
        "grad_decay": config.grad_decay,
        "squared_grad_decay": config.squared_grad_decay,
        "epsilon": config.epsilon,
    }


def _clip_gradients(grads: Dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def validation_metrics(
    model: BiLstmModel, dataset: Sequence[FeatureSequence]
) -> Tuple[float, float]:
    """Mean cross-entropy and accuracy over a dataset, dropout off."""
    losses = []
    correct = 0
    for seq in dataset:
        states = bilstm_forward(model, seq.features, training=False)
        losses.append(cross_entropy_from_logits(states.logits, seq.label))
        if int(np.argmax(states.probs)) == seq.label:
            correct += 1
    return float(np.mean(losses)), correct / len(dataset)


def classify(model: BiLstmModel, seq: FeatureSequence) -> int:
    return int(np.argmax(bilstm_forward(model, seq.features, training=False).probs))


def train(
    model: BiLstmModel,
    train_set: Sequence[FeatureSequence],
    val_set: Sequence[FeatureSequence],
    config: TrainConfig,
) -> Tuple[BiLstmModel, TrainHistory]:
    """Train in place; returns the model restored to its best epoch."""
    config.validate()
    if len(train_set) == 0:
        raise ValidationError("training set is empty")
    for seq in list(train_set) + list(val_set):
        if seq.dim != model.input_size:
            raise ValidationError(
                f"region {seq.region_id}: feature dimension {seq.dim} "
                f"does not match model input size {model.input_size}"
            )
        if not 0 <= seq.label < model.class_count:
            raise ValidationError(
                f"region {seq.region_id}: label {seq.label} outside class range"
            )

    model.dropout_rate = config.dropout_rate
    rng = np.random.default_rng(config.seed)
    params = dict(model.named_parameters())
    optimizer = make_optimizer(config.optimizer, config.learning_rate, **_optimizer_kwargs(config))

    history = TrainHistory()
    best_loss = np.inf
    best_snapshot = model.snapshot()
    best_epoch = 0
    patience_count = 0
    stop_reason = "max_epochs"

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for idx in order:
            seq = train_set[idx]
            states = bilstm_forward(model, seq.features, training=True, rng=rng)
            epoch_losses.append(cross_entropy_from_logits(states.logits, seq.label))
            grads = backprop(model, states, seq.label)
            if config.clip_norm is not None:
                _clip_gradients(grads, config.clip_norm)
            optimizer.step(params, grads)

        val_loss: Optional[float] = None
        val_acc: Optional[float] = None
        if len(val_set) > 0:
            val_loss, val_acc = validation_metrics(model, val_set)
        history.epochs.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(np.mean(epoch_losses)),
                val_loss=val_loss,
                val_accuracy=val_acc,
            )
        )

        if val_loss is None:
            best_snapshot = model.snapshot()
            best_epoch = epoch
            continue
        if val_loss < best_loss:
            best_loss = val_loss
            best_snapshot = model.snapshot()
            best_epoch = epoch
            patience_count = 0
        else:
            patience_count += 1
            if config.patience is not None and patience_count >= config.patience:
                stop_reason = "patience"
                break

    model.load_snapshot(best_snapshot)
    history.stop_reason = stop_reason
    history.best_epoch = best_epoch
    return model, history
