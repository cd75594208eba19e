"""
Adam optimizer over named parameter arrays.
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..errors import ConfigError, ShapeMismatchError


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.eps <= 0:
            raise ConfigError("learning_rate and eps must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas must be in [0, 1), got {self.beta1}, {self.beta2}")


@dataclass
class AdamState:
    """First and second moment estimates per parameter name."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              t: int, cfg: AdamConfig = AdamConfig()) -> None:
    """
    One bias-corrected Adam update, in place on ``params`` and ``state``.

    Args:
        t: 1-based step number used for bias correction
    """
    if t < 1:
        raise ConfigError(f"Adam step number must be >= 1, got {t}")
    if set(grads) != set(params):
        raise ShapeMismatchError("gradients and parameters have different names")
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"gradient of {name} is {g.shape}, parameter is {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        step = cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        p -= step.astype(p.dtype, copy=False)
    state.t = t


__all__ = ["AdamConfig", "AdamState", "adam_step"]
