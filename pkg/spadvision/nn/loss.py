"""
Focal Tversky loss on soft (probabilistic) counts.

Per class c, over the batch and all pixels::

    tp = sum(p * g)    fn = sum((1 - p) * g)    fp = sum(p * (1 - g))
    TI = (tp + s) / (tp + alpha * fn + beta * fp + s)
    loss = mean_c (1 - TI) ** gamma

alpha weighs missed pixels, beta false alarms, and gamma > 1 focuses the
loss on classes that are still badly segmented. Background is one of the
averaged classes.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import ConfigError, ShapeMismatchError


@dataclass(frozen=True)
class TverskyConfig:
    alpha: float = 0.6
    beta: float = 0.4
    gamma: float = 1.2
    smooth: float = 1e-6

    def __post_init__(self):
        if not math.isclose(self.alpha + self.beta, 1.0, abs_tol=1e-12):
            raise ConfigError(f"alpha + beta must equal 1, got {self.alpha} + {self.beta}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.smooth < 0:
            raise ConfigError(f"smooth must be >= 0, got {self.smooth}")


@dataclass
class SoftCounts:
    """Per-class soft true positives, false negatives and false positives."""
    tp: np.ndarray
    fn: np.ndarray
    fp: np.ndarray


def soft_counts(probs: np.ndarray, target: np.ndarray) -> SoftCounts:
    """Soft counts per class of (n, classes, h, w) probabilities against one-hot targets."""
    if probs.shape != target.shape or probs.ndim != 4:
        raise ShapeMismatchError(f"probs {probs.shape} and target {target.shape} must be equal (n, c, h, w)")
    g = target.astype(probs.dtype, copy=False)
    axes = (0, 2, 3)
    tp = (probs * g).sum(axis=axes)
    return SoftCounts(tp=tp, fn=g.sum(axis=axes) - tp, fp=probs.sum(axis=axes) - tp)


def tversky_index(counts: SoftCounts, cfg: TverskyConfig = TverskyConfig()) -> np.ndarray:
    """Tversky index per class; a class absent from both sides scores 1."""
    den = counts.tp + cfg.alpha * counts.fn + cfg.beta * counts.fp + cfg.smooth
    with np.errstate(invalid="ignore", divide="ignore"):
        index = (counts.tp + cfg.smooth) / den
    return np.where(den > 0, index, 1.0)


def focal_tversky_term(counts: SoftCounts, cfg: TverskyConfig = TverskyConfig()) -> np.ndarray:
    """(1 - TI) ** gamma per class."""
    return np.maximum(1.0 - tversky_index(counts, cfg), 0.0) ** cfg.gamma


def focal_tversky_loss(probs: np.ndarray, target: np.ndarray,
                       cfg: TverskyConfig = TverskyConfig()) -> Tuple[float, np.ndarray]:
    """
    Loss value and its gradient with respect to ``probs``.

    Args:
        probs: (n, 7, h, w) class probabilities
        target: (n, 7, h, w) one-hot ground truth

    Returns:
        (loss, dloss/dprobs with the shape of probs)
    """
    counts = soft_counts(probs, target)
    g = target.astype(probs.dtype, copy=False)
    n_classes = probs.shape[1]

    num = counts.tp + cfg.smooth
    den = counts.tp + cfg.alpha * counts.fn + cfg.beta * counts.fp + cfg.smooth
    defined = den > 0
    safe_den = np.where(defined, den, 1.0)
    index = np.where(defined, num / safe_den, 1.0)
    one_minus = np.maximum(1.0 - index, 0.0)
    loss = float((one_minus ** cfg.gamma).mean())

    # d term / d TI, zero where the term is flat (TI = 1 or undefined)
    active = defined & (one_minus > 0)
    dterm = np.where(active, -cfg.gamma * np.where(active, one_minus, 1.0) ** (cfg.gamma - 1.0), 0.0)

    # dTI/dp = (g * den - num * (g * (1 - alpha) + beta * (1 - g))) / den^2
    shape = (1, n_classes, 1, 1)
    den_b = safe_den.reshape(shape)
    num_b = num.reshape(shape)
    dindex = (g * den_b - num_b * (g * (1.0 - cfg.alpha) + cfg.beta * (1.0 - g))) / den_b ** 2
    grad = dindex * (dterm / n_classes).reshape(shape)
    return loss, grad.astype(probs.dtype, copy=False)


__all__ = [
    "TverskyConfig",
    "SoftCounts",
    "soft_counts",
    "tversky_index",
    "focal_tversky_term",
    "focal_tversky_loss",
]
