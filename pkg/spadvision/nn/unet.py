"""
U-net style encoder-decoder for per-pixel classification.

With the default spec (3 levels, base 16 channels)::

    enc0   in -> 16 -> 16          (32x64)
    pool
    enc1   16 -> 32 -> 32          (16x32)
    pool
    enc2   32 -> 64 -> 64          (8x16, bottleneck)
    up + concat enc1 -> dec1   96 -> 32 -> 32
    up + concat enc0 -> dec0   48 -> 16 -> 16
    head   1x1 conv 16 -> 7, softmax over classes

Every conv is 3x3, stride 1, zero padding 1, followed by relu, except the
1x1 head. Only the first conv changes with the input data type.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigError, ShapeMismatchError
from ..histproc import IN_CHANNELS, NetworkInput
from ..sensor import N_CHANNELS
from . import layers

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]


@dataclass(frozen=True)
class UnetSpec:
    in_channels: int
    n_classes: int = N_CHANNELS
    base_channels: int = 16
    n_levels: int = 3
    kernel: int = 3

    def __post_init__(self):
        if self.in_channels not in (1, 2, 16):
            raise ConfigError(f"in_channels must be 1, 2 or 16, got {self.in_channels}")
        if self.n_classes != N_CHANNELS:
            raise ConfigError(f"n_classes must be {N_CHANNELS}, got {self.n_classes}")
        if self.base_channels < 1 or self.n_levels < 1:
            raise ConfigError("base_channels and n_levels must be positive")
        if self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd, got {self.kernel}")

    @classmethod
    def for_kind(cls, kind: str, **kwargs) -> "UnetSpec":
        if kind not in IN_CHANNELS:
            raise ConfigError(f"unknown input kind {kind!r}")
        return cls(in_channels=IN_CHANNELS[kind], **kwargs)

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level

    @property
    def divisor(self) -> int:
        """Input height and width must be multiples of this."""
        return 2 ** (self.n_levels - 1)

    def conv_shapes(self) -> "OrderedDict[str, Tuple[int, int, int, int]]":
        """Weight shape of every conv, in parameter order."""
        shapes = OrderedDict()
        k = self.kernel
        prev = self.in_channels
        for level in range(self.n_levels):
            ch = self.channels(level)
            shapes[f"enc{level}.conv1"] = (ch, prev, k, k)
            shapes[f"enc{level}.conv2"] = (ch, ch, k, k)
            prev = ch
        for level in range(self.n_levels - 2, -1, -1):
            ch = self.channels(level)
            shapes[f"dec{level}.conv1"] = (ch, prev + ch, k, k)
            shapes[f"dec{level}.conv2"] = (ch, ch, k, k)
            prev = ch
        shapes["head"] = (self.n_classes, prev, 1, 1)
        return shapes

    def parameter_count(self) -> int:
        return sum(o * i * kh * kw + o for o, i, kh, kw in self.conv_shapes().values())


class UNet:
    """
    Parameters plus forward/backward passes. ``kind`` names the input data
    type the model was trained on, when known.
    """

    def __init__(self, spec: UnetSpec, params: Params, kind: Optional[str] = None):
        self.spec = spec
        self.kind = kind
        expected = {}
        for name, shape in spec.conv_shapes().items():
            expected[f"{name}.w"] = shape
            expected[f"{name}.b"] = (shape[0],)
        if set(params) != set(expected):
            raise ShapeMismatchError(f"parameter names differ from the UnetSpec layout: {sorted(set(params) ^ set(expected))}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeMismatchError(f"{name} must be {shape}, got {params[name].shape}")
        self.params: Params = OrderedDict((name, params[name]) for name in expected)
        self._cache = None

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "UNet":
        return UNet(self.spec, OrderedDict((k, v.copy()) for k, v in self.params.items()), self.kind)

    def astype(self, dtype) -> "UNet":
        return UNet(self.spec, OrderedDict((k, v.astype(dtype)) for k, v in self.params.items()), self.kind)

    def _conv(self, name: str, x: np.ndarray, cache: list) -> np.ndarray:
        out, cols = layers.conv2d_forward(x, self.params[f"{name}.w"], self.params[f"{name}.b"])
        cache.append((name, x.shape, cols))
        return out

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeMismatchError(f"model expects (n, {self.spec.in_channels}, h, w), got {x.shape}")
        d = self.spec.divisor
        if x.shape[2] % d or x.shape[3] % d:
            raise ShapeMismatchError(f"input height and width must be multiples of {d}, got {x.shape[2:]}")

    def forward(self, x: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        """Class probabilities (n, 7, h, w) for an (n, c, h, w) batch."""
        self._check_input(x)
        convs: list = []
        relus: list = []
        pools: list = []
        skips: List[np.ndarray] = []
        h = x
        levels = self.spec.n_levels
        for level in range(levels):
            for part in ("conv1", "conv2"):
                pre = self._conv(f"enc{level}.{part}", h, convs)
                relus.append(pre)
                h = layers.relu_forward(pre)
            if level < levels - 1:
                skips.append(h)
                h, index = layers.maxpool2_forward(h)
                pools.append(index)
        for level in range(levels - 2, -1, -1):
            h = layers.concat_channels(layers.upsample2_forward(h), skips[level])
            for part in ("conv1", "conv2"):
                pre = self._conv(f"dec{level}.{part}", h, convs)
                relus.append(pre)
                h = layers.relu_forward(pre)
        logits = self._conv("head", h, convs)
        probs = layers.softmax_channels(logits)
        layers.check_finite("network output", probs)
        self._cache = (convs, relus, pools, probs) if keep_cache else None
        return probs

    def backward(self, grad_probs: np.ndarray) -> Params:
        """Parameter gradients for dloss/dprobs of the last forward pass."""
        return self._backward(grad_probs)[0]

    def backward_input(self, grad_probs: np.ndarray) -> Tuple[Params, np.ndarray]:
        """Parameter gradients plus the gradient with respect to the input."""
        return self._backward(grad_probs)

    def _backward(self, grad_probs: np.ndarray) -> Tuple[Params, np.ndarray]:
        if self._cache is None:
            raise ShapeMismatchError("backward called without a cached forward pass")
        convs, relus, pools, probs = self._cache
        convs, relus, pools = list(convs), list(relus), list(pools)
        grads: Params = {}

        def conv_back(g):
            name, x_shape, cols = convs.pop()
            gx, gw, gb = layers.conv2d_backward(g, x_shape, self.params[f"{name}.w"], cols)
            grads[f"{name}.w"], grads[f"{name}.b"] = gw, gb
            return gx

        levels = self.spec.n_levels
        g = conv_back(layers.softmax_backward(grad_probs, probs))
        skip_grads = {}
        for level in range(levels - 1):
            for _ in ("conv2", "conv1"):
                g = conv_back(layers.relu_backward(g, relus.pop()))
            g_up, skip_grads[level] = layers.split_channels(g, g.shape[1] - self.spec.channels(level))
            g = layers.upsample2_backward(g_up)
        for level in range(levels - 1, -1, -1):
            if level < levels - 1:
                g = layers.maxpool2_backward(g, pools.pop()) + skip_grads[level]
            for _ in ("conv2", "conv1"):
                g = conv_back(layers.relu_backward(g, relus.pop()))
        ordered = OrderedDict((name, grads[name]) for name in self.params)
        for name, value in ordered.items():
            layers.check_finite(f"gradient of {name}", value)
        return ordered, g

    def activation_pattern(self, x: np.ndarray) -> np.ndarray:
        """
        Relu signs and pooling choices of a forward pass, flattened; the
        network is smooth wherever this pattern is constant.
        """
        self.forward(x)
        _, relus, pools, _ = self._cache
        self._cache = None
        return np.concatenate([(r > 0).ravel() for r in relus] + [p.ravel() for p in pools])


def build_unet(spec: UnetSpec, seed: int, dtype=np.float32, kind: Optional[str] = None) -> UNet:
    """
    He-uniform initialized network: weights ~ U(-l, l) with
    l = sqrt(6 / fan_in), biases 0. Deterministic for a seed.
    """
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, shape in spec.conv_shapes().items():
        fan_in = shape[1] * shape[2] * shape[3]
        limit = np.sqrt(6.0 / fan_in)
        params[f"{name}.w"] = rng.uniform(-limit, limit, size=shape).astype(dtype)
        params[f"{name}.b"] = np.zeros(shape[0], dtype=dtype)
    model = UNet(spec, params, kind)
    logger.debug("Built U-net with %d parameters (%s)", model.parameter_count(), spec)
    return model


def _as_batch(model: UNet, inputs) -> np.ndarray:
    if isinstance(inputs, NetworkInput):
        if model.kind is not None and inputs.kind != model.kind:
            raise ShapeMismatchError(f"model was trained on {model.kind} input, got {inputs.kind}")
        return inputs.to_nchw()
    return np.asarray(inputs)


def predict(model: UNet, inputs: Union[NetworkInput, np.ndarray],
            batch_size: int = 32) -> Tuple[np.ndarray, np.ndarray]:
    """
    Forward pass without caching.

    Args:
        inputs: one NetworkInput, or an (n, c, h, w) batch

    Returns:
        (probs, class_map): (7, h, w) and (h, w) for a single input,
        (n, 7, h, w) and (n, h, w) for a batch. Argmax ties go to the lower
        class index.
    """
    single = isinstance(inputs, NetworkInput)
    x = _as_batch(model, inputs).astype(model.dtype, copy=False)
    model._check_input(x)
    chunks = [model.forward(x[i:i + batch_size], keep_cache=False) for i in range(0, x.shape[0], batch_size)]
    probs = np.concatenate(chunks) if chunks else np.zeros((0, model.spec.n_classes) + x.shape[2:], model.dtype)
    class_map = probs.argmax(axis=1).astype(np.uint8)
    if single:
        return probs[0], class_map[0]
    return probs, class_map


__all__ = ["UnetSpec", "UNet", "build_unet", "predict"]
