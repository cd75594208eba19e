"""
Forward and backward passes of the segmentation network's layers.

Tensors are numpy arrays in (n, c, h, w) order. Forward functions return
their output plus whatever the backward pass needs; backward functions
return exact analytic gradients. The dtype follows the input, so the same
code runs in float32 for training and float64 for gradient checks.
"""

from typing import Callable, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..config import debug_checks_enabled
from ..errors import ShapeMismatchError, TrainingError


def check_finite(name: str, array: np.ndarray) -> None:
    """Raise if ``array`` holds NaN or Inf while debug checks are enabled."""
    if debug_checks_enabled() and not np.all(np.isfinite(array)):
        raise TrainingError(f"non-finite values in {name} (shape {array.shape})")


def _check_4d(name: str, x: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeMismatchError(f"{name} expects (n, c, h, w), got {x.shape}")


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(n, c, h, w) -> (n*h*w, c*k*k) patches, zero padded to keep h and w."""
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))
    n, c, h, w = x.shape
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stride-1 cross-correlation with 'same' zero padding.

    Args:
        x: (n, c_in, h, w) input
        weight: (c_out, c_in, k, k) kernel, k odd
        bias: (c_out,) bias

    Returns:
        (output (n, c_out, h, w), im2col patches for the backward pass)
    """
    _check_4d("conv2d", x)
    c_out, c_in, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ShapeMismatchError(f"conv2d kernel must be square and odd, got {k}x{k2}")
    if x.shape[1] != c_in:
        raise ShapeMismatchError(f"conv2d weight expects {c_in} input channels, got {x.shape[1]}")
    if bias.shape != (c_out,):
        raise ShapeMismatchError(f"conv2d bias must be ({c_out},), got {bias.shape}")
    n, _, h, w = x.shape
    cols = _im2col(x, k)
    out = cols @ weight.reshape(c_out, -1).T + bias
    out = out.reshape(n, h, w, c_out).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), cols


def conv2d_backward(grad_out: np.ndarray, x_shape: Tuple[int, ...], weight: np.ndarray,
                    cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (grad_x, grad_weight, grad_bias) of conv2d_forward."""
    n, c_in, h, w = x_shape
    c_out, _, k, _ = weight.shape
    if grad_out.shape != (n, c_out, h, w):
        raise ShapeMismatchError(f"conv2d gradient must be {(n, c_out, h, w)}, got {grad_out.shape}")
    g = grad_out.transpose(0, 2, 3, 1).reshape(n * h * w, c_out)
    grad_weight = (g.T @ cols).reshape(weight.shape)
    grad_bias = g.sum(axis=0)
    dcols = (g @ weight.reshape(c_out, -1)).reshape(n, h, w, c_in, k, k)

    pad = k // 2
    grad_xp = np.zeros((n, c_in, h + 2 * pad, w + 2 * pad), dtype=grad_out.dtype)
    for i in range(k):
        for j in range(k):
            grad_xp[:, :, i:i + h, j:j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    grad_x = grad_xp[:, :, pad:pad + h, pad:pad + w] if pad else grad_xp
    return np.ascontiguousarray(grad_x), grad_weight, grad_bias


def maxpool2_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    2x2 max pooling, stride 2.

    Returns:
        (output, argmax within each window in row-major order; ties keep
        the first position)
    """
    _check_4d("maxpool2", x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"maxpool2 needs even height and width, got {h}x{w}")
    windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    index = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, index[..., None], axis=-1)[..., 0]
    return out, index


def maxpool2_backward(grad_out: np.ndarray, index: np.ndarray) -> np.ndarray:
    """Route each gradient to the position that won the max."""
    if grad_out.shape != index.shape:
        raise ShapeMismatchError(f"maxpool2 gradient {grad_out.shape} does not match {index.shape}")
    n, c, hh, ww = grad_out.shape
    windows = np.zeros((n, c, hh, ww, 4), dtype=grad_out.dtype)
    np.put_along_axis(windows, index[..., None], grad_out[..., None], axis=-1)
    return windows.reshape(n, c, hh, ww, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * hh, 2 * ww)


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour upsampling by 2 in both spatial axes."""
    _check_4d("upsample2", x)
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(grad_out: np.ndarray) -> np.ndarray:
    _check_4d("upsample2 gradient", grad_out)
    n, c, h, w = grad_out.shape
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"upsample2 gradient needs even height and width, got {h}x{w}")
    return grad_out.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient of relu; the kink at 0 takes gradient 0."""
    if grad_out.shape != x.shape:
        raise ShapeMismatchError(f"relu gradient {grad_out.shape} does not match input {x.shape}")
    return grad_out * (x > 0)


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_4d("concat", a)
    _check_4d("concat", b)
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeMismatchError(f"cannot concatenate {a.shape} and {b.shape} along channels")
    return np.concatenate([a, b], axis=1)


def split_channels(grad: np.ndarray, channels_a: int) -> Tuple[np.ndarray, np.ndarray]:
    """Split a concat gradient back into its two inputs' gradients."""
    return grad[:, :channels_a], grad[:, channels_a:]


def softmax_channels(logits: np.ndarray) -> np.ndarray:
    """Softmax over axis 1 (classes) at every pixel."""
    _check_4d("softmax", logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(grad_probs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of the channel softmax."""
    if grad_probs.shape != probs.shape:
        raise ShapeMismatchError(f"softmax gradient {grad_probs.shape} does not match {probs.shape}")
    return probs * (grad_probs - (grad_probs * probs).sum(axis=1, keepdims=True))


def gradient_check(func: Callable[[np.ndarray], float], x: np.ndarray, analytic: np.ndarray,
                   step: float = 1e-6, indices: Optional[np.ndarray] = None,
                   pattern: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                   floor: float = 1e-5) -> float:
    """
    Largest relative error between ``analytic`` and central differences.

    ``func`` evaluates a scalar at ``x`` (perturbed in place and restored).
    ``indices`` selects flat coordinates to check, all by default. When
    ``pattern`` is given, coordinates where the pattern differs between
    ``x - step`` and ``x + step`` are skipped, since the function is not
    differentiable across them (a relu or pooling decision flips).

    The relative error of one coordinate is |a - n| / max(|a|, |n|, floor).
    """
    if analytic.shape != x.shape:
        raise ShapeMismatchError(f"analytic gradient {analytic.shape} does not match {x.shape}")
    if not x.flags.c_contiguous or not x.flags.writeable:
        raise ShapeMismatchError("gradient_check perturbs x in place; pass a writable C-contiguous array")
    flat_x = x.reshape(-1)
    flat_a = analytic.reshape(-1)
    coords = np.arange(flat_x.size) if indices is None else np.asarray(indices)
    worst = 0.0
    for i in coords:
        original = flat_x[i]
        flat_x[i] = original + step
        plus = func(x)
        pattern_plus = pattern(x) if pattern is not None else None
        flat_x[i] = original - step
        minus = func(x)
        pattern_minus = pattern(x) if pattern is not None else None
        flat_x[i] = original
        if pattern is not None and not np.array_equal(pattern_plus, pattern_minus):
            continue
        numeric = (plus - minus) / (2.0 * step)
        err = abs(flat_a[i] - numeric) / max(abs(flat_a[i]), abs(numeric), floor)
        worst = max(worst, float(err))
    return worst


__all__ = [
    "check_finite",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool2_forward",
    "maxpool2_backward",
    "upsample2_forward",
    "upsample2_backward",
    "relu_forward",
    "relu_backward",
    "concat_channels",
    "split_channels",
    "softmax_channels",
    "softmax_backward",
    "gradient_check",
]
