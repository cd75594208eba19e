# Segmentation network for SpadVision

"""
A small U-net written directly on numpy: layers with analytic gradients,
the focal Tversky loss, Adam and the early-stopping training loop.
"""

from .layers import gradient_check
from .loss import SoftCounts, TverskyConfig, focal_tversky_loss, soft_counts, tversky_index
from .optim import AdamConfig, AdamState, adam_step
from .train import EarlyStopping, TrainConfig, TrainHistory, train, validation_loss
from .unet import UNet, UnetSpec, build_unet, predict

__all__ = [
    # Network
    "UnetSpec",
    "UNet",
    "build_unet",
    "predict",
    # Loss
    "TverskyConfig",
    "SoftCounts",
    "soft_counts",
    "tversky_index",
    "focal_tversky_loss",
    # Optimization
    "AdamConfig",
    "AdamState",
    "adam_step",
    "TrainConfig",
    "TrainHistory",
    "EarlyStopping",
    "train",
    "validation_loss",
    # Verification
    "gradient_check",
]
