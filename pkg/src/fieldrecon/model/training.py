"""Mini-batch training with best-validation-epoch selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..dataset.placement import MASK64, Prng, prng_next
from .net import ConvNet, forward_array, loss_and_grads
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 300
    learning_rate: float = 1e-4
    batch_size: int = 32
    init_seed: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    masked_loss: bool = False
    samples_per_epoch: int = 0  # 0 uses every training sample each epoch

    def __post_init__(self):
        if self.max_epochs < 0 or self.batch_size < 1 or not self.learning_rate > 0 or self.samples_per_epoch < 0:
            raise ValueError(f"invalid training hyperparameters: {self}")


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int | None = None

    def __len__(self):
        return len(self.train_loss)


def epoch_order(n: int, epoch: int, seed: int) -> list[int]:
    """Sample order for one epoch, a pure function of (n, epoch, seed)."""
    state = (seed * 0x100000001B3 + epoch) & MASK64
    mixed, _ = prng_next(state)
    return Prng(mixed).shuffle(list(range(n)))


def evaluate_loss(net: ConvNet, x, y, m, batch_size=32) -> float:
    """Masked MSE over a whole dataset (pixel-weighted, not batch-averaged)."""
    total = 0.0
    count = float(np.sum(m))
    for start in range(0, len(x), batch_size):
        sl = slice(start, start + batch_size)
        out, _ = forward_array(net, x[sl])
        diff = np.where(m[sl] == 1, out - y[sl], 0.0)
        total += float(np.sum(diff * diff))
    return total / count


def predict(net: ConvNet, x, batch_size=32) -> np.ndarray:
    return np.concatenate([forward_array(net, x[s : s + batch_size])[0] for s in range(0, len(x), batch_size)])


def train(net: ConvNet, train_data, val_data, config: TrainConfig, callback=None):
    """Fit ``net`` with Adam; return (best-validation net, History).

    ``train_data`` and ``val_data`` are (inputs, targets, loss_masks) arrays
    shaped (N, C, H, W), (N, H, W), (N, H, W). Without masked loss every
    pixel counts.
    """
    x, y, m = train_data
    vx, vy, vm = val_data
    if len(x) == 0 or len(vx) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if not config.masked_loss:
        m = np.ones_like(y)
        vm = np.ones_like(vy)
    net = net.copy()
    best = net.copy()
    best_val = math.inf
    history = History()
    state = AdamState.zeros_like(net.params())
    for epoch in range(config.max_epochs):
        order = epoch_order(len(x), epoch, config.init_seed)
        if config.samples_per_epoch:
            order = order[: config.samples_per_epoch]
        weighted = 0.0
        pixels = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_grads(net, x[idx], y[idx], m[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}, batch {start // config.batch_size}")
            state = adam_step(net.params(), grads, state, config.learning_rate, config.beta1, config.beta2, config.epsilon)
            k = float(np.sum(m[idx]))
            weighted += loss * k
            pixels += k
        with np.errstate(over="ignore", invalid="ignore"):
            val = evaluate_loss(net, vx, vy, vm, config.batch_size)
        if not math.isfinite(val):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(weighted / pixels)
        history.val_loss.append(val)
        if val < best_val:
            best_val = val
            best = net.copy()
            history.best_epoch = epoch
        log.info("epoch %d train %.6g val %.6g", epoch, history.train_loss[-1], val)
        if callback is not None:
            callback(epoch, history)
    return best, history
