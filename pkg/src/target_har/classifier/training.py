"""Training loop, evaluation, and finite-difference gradient check."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..pose_evolution import augment_noise
from . import network
from .metrics import Metrics, confusion_matrix
from .network import Model, NetworkSpec
from .optim import AdamState, adam_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 70
    dropout: float = 0.3
    epochs: int = 30
    seed: int = 0
    sigma_aug: float = 0.01
    # Stop once validation accuracy reaches this value (None trains all epochs).
    stop_at_accuracy: Optional[float] = None
    # Training clips used to re-estimate BN statistics after each epoch (0 keeps the moving averages).
    bn_recalibration: int = 500

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 1 or self.sigma_aug < 0 or self.bn_recalibration < 0:
            raise ValueError("lr, sigma_aug must be >= 0; batch_size, epochs >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


def predict(model: Model, x: np.ndarray) -> np.ndarray:
    return network.predict_proba(model, x).argmax(axis=1)


def evaluate(model: Model, x: np.ndarray, y: Sequence[int]) -> Metrics:
    pred = predict(model, x) if len(x) else np.zeros(0, dtype=int)
    return Metrics(confusion_matrix(y, pred, model.spec.num_classes))


def train(
    train_x: np.ndarray,
    train_y: Sequence[int],
    val_x: np.ndarray,
    val_y: Sequence[int],
    spec: NetworkSpec,
    cfg: TrainConfig = TrainConfig(),
):
    """Adam training with per-batch noise augmentation.

    Returns (best model by validation accuracy, per-epoch history).
    """
    if len(train_x) == 0:
        raise ValueError("empty training set")
    train_y = np.asarray(train_y)
    val_y = np.asarray(val_y)
    spec = dataclasses.replace(spec, dropout=cfg.dropout)
    root = np.random.default_rng(cfg.seed)
    init_seed, shuffle_seed, noise_seed, drop_seed = root.integers(0, 2**63 - 1, size=4)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    noise_rng = np.random.default_rng(noise_seed)
    drop_rng = np.random.default_rng(drop_seed)

    model = network.init_params(spec, init_seed)
    state = AdamState()
    best, best_acc = None, -1.0
    history: List[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_x))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = np.sort(order[start : start + cfg.batch_size])
            batch = augment_noise(train_x[idx], cfg.sigma_aug, noise_rng)
            loss, grads, cache = network.loss_and_grad(model, batch, train_y[idx], seed=drop_rng)
            params, state = adam_step(model.params, grads, state, cfg.lr)
            model = Model(spec, params, cache["running"])
            losses.append(loss * len(idx))
        train_loss = float(np.sum(losses) / len(train_x))
        if cfg.bn_recalibration:
            sub = np.sort(shuffle_rng.permutation(len(train_x))[: cfg.bn_recalibration])
            model = network.recalibrate_bn(model, train_x[sub])
        val_acc = evaluate(model, val_x, val_y).accuracy if len(val_x) else 0.0
        history.append(EpochRecord(epoch, train_loss, val_acc))
        logger.info("epoch %d loss %.4f val_acc %.4f", epoch, train_loss, val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            best = model.copy()
        if cfg.stop_at_accuracy is not None and val_acc >= cfg.stop_at_accuracy:
            break
    return best, history


def _relative_error(a: np.ndarray, b: np.ndarray, floor: float) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(
    spec: NetworkSpec = NetworkSpec(in_channels=6, height=8, width=8, block_filters=(2, 2), num_classes=3),
    batch_size: int = 4,
    seed: int = 0,
    eps: float = 1e-5,
    floor: float = 1e-6,
    train: bool = True,
) -> Dict[str, float]:
    """Max relative error per parameter between backprop and central differences.

    Runs in float64. In train mode the dropout masks are held fixed by
    reusing the seed for every evaluation. Elements where both gradients are
    below `floor` in magnitude are compared on an absolute scale of `floor`.
    """
    rng = np.random.default_rng(seed)
    model = network.init_params(spec, seed, dtype=np.float64)
    for k in model.params:
        if k.endswith(("gamma", "beta", ".b")):
            model.params[k] = model.params[k] + rng.normal(0.0, 0.1, model.params[k].shape)
    x = rng.random((batch_size, spec.in_channels, spec.height, spec.width))
    y = rng.integers(0, spec.num_classes, batch_size)
    dropout_seed = int(rng.integers(0, 2**31))

    def loss_at(params):
        m = Model(spec, params, model.running)
        loss, _, _ = network.loss_and_grad(m, x, y, seed=dropout_seed, train=train)
        return loss

    _, grads, _ = network.loss_and_grad(model, x, y, seed=dropout_seed, train=train)
    report = {}
    for name, value in model.params.items():
        numeric = np.zeros_like(value)
        for i in np.ndindex(value.shape):
            orig = value[i]
            value[i] = orig + eps
            plus = loss_at(model.params)
            value[i] = orig - eps
            minus = loss_at(model.params)
            value[i] = orig
            numeric[i] = (plus - minus) / (2 * eps)
        report[name] = float(_relative_error(grads[name], numeric, floor).max())
    return report
