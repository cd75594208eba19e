"""
Mini-batch training with validation-loss early stopping.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..errors import ConfigError, ShapeMismatchError, TrainingError
from .loss import TverskyConfig, focal_tversky_loss
from .optim import AdamConfig, AdamState, adam_step
from .unet import UNet

logger = logging.getLogger(__name__)

Split = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    patience: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.beta1, self.beta2, self.eps)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], prefix: str = "train.") -> "TrainConfig":
        kwargs = {}
        for name in cls.__dataclass_fields__:
            if prefix + name in values:
                kwargs[name] = values[prefix + name]
        return cls(**kwargs)

    def as_mapping(self, prefix: str = "train.") -> Dict[str, Any]:
        return {prefix + name: getattr(self, name) for name in self.__dataclass_fields__}


class EarlyStopping:
    """
    Tracks the best validation loss. Only a strictly lower loss counts as
    an improvement; training stops once ``patience`` consecutive epochs
    pass without one.
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.counter = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; True if it is the new best."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.counter = 0
            return True
        self.counter += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.counter >= self.patience


@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    seconds: float = 0.0

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1] if self.best_epoch else math.nan

    def as_dict(self) -> Dict[str, Any]:
        return {
            "epochs": self.stopped_epoch,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "train_loss": list(self.train_loss),
            "val_loss": list(self.val_loss),
            "seconds": self.seconds,
        }


def _check_split(name: str, split: Split, model: UNet) -> Split:
    x, y = split
    if len(x) == 0:
        raise TrainingError(f"{name} split is empty")
    if len(x) != len(y):
        raise ShapeMismatchError(f"{name} split has {len(x)} inputs and {len(y)} targets")
    if y.shape[1] != model.spec.n_classes or y.shape[2:] != x.shape[2:]:
        raise ShapeMismatchError(f"{name} targets {y.shape} do not match inputs {x.shape}")
    return x.astype(model.dtype, copy=False), y


def _check_loss(loss: float, epoch: int, where: str) -> None:
    if not math.isfinite(loss):
        raise TrainingError(f"loss became {loss} in epoch {epoch} ({where})")


def validation_loss(model: UNet, split: Split, batch_size: int = 32,
                    tversky: TverskyConfig = TverskyConfig()) -> float:
    """Mean focal Tversky loss over batches, weighted by batch size."""
    x, y = split
    total = 0.0
    for start in range(0, len(x), batch_size):
        xb = x[start:start + batch_size]
        probs = model.forward(xb, keep_cache=False)
        loss, _ = focal_tversky_loss(probs, y[start:start + batch_size], tversky)
        total += loss * len(xb)
    return total / len(x)


def train(model: UNet, train_split: Split, val_split: Split, cfg: TrainConfig = TrainConfig(),
          tversky: TverskyConfig = TverskyConfig(),
          evaluate: Optional[Callable[[UNet, int], float]] = None,
          on_epoch_end: Optional[Callable[[int, TrainHistory], None]] = None) -> Tuple[UNet, TrainHistory]:
    """
    Train ``model`` (updated in place) and return a copy holding the
    parameters of the epoch with the lowest validation loss.

    Args:
        train_split: (inputs (n, c, h, w), one-hot targets (n, 7, h, w))
        val_split: same layout as train_split
        evaluate: optional ``(model, epoch) -> val loss`` replacing the
            focal Tversky validation loss
        on_epoch_end: called with (epoch, history) after every epoch

    Raises:
        TrainingError: on an empty split or a non-finite loss.
    """
    x_train, y_train = _check_split("train", train_split, model)
    val = _check_split("validation", val_split, model)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    stopper = EarlyStopping(cfg.patience)
    history = TrainHistory()
    best = model.copy()
    step = 0
    n = len(x_train)
    started = time.perf_counter()

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            probs = model.forward(x_train[batch])
            loss, grad = focal_tversky_loss(probs, y_train[batch], tversky)
            _check_loss(loss, epoch, f"batch starting at {start}")
            step += 1
            adam_step(model.params, model.backward(grad), state, step, cfg.adam)
            epoch_loss += loss * len(batch)
        history.train_loss.append(epoch_loss / n)

        val_loss = evaluate(model, epoch) if evaluate is not None else validation_loss(
            model, val, cfg.batch_size, tversky)
        _check_loss(val_loss, epoch, "validation")
        history.val_loss.append(float(val_loss))
        if stopper.update(epoch, val_loss):
            best = model.copy()
        history.best_epoch = stopper.best_epoch
        history.stopped_epoch = epoch
        logger.info("epoch %3d  train %.5f  val %.5f  best %.5f (epoch %d)  patience %d/%d",
                    epoch, history.train_loss[-1], val_loss, stopper.best_loss,
                    stopper.best_epoch, stopper.counter, cfg.patience)
        if on_epoch_end is not None:
            on_epoch_end(epoch, history)
        if stopper.should_stop:
            logger.info("Early stop after epoch %d; restoring epoch %d", epoch, stopper.best_epoch)
            break

    history.seconds = time.perf_counter() - started
    model._cache = None
    return best, history


__all__ = ["TrainConfig", "EarlyStopping", "TrainHistory", "validation_loss", "train"]
