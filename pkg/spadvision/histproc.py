"""
Histogram and intensity processing chain.

Turns raw sensor frames into the five network input types:

=========  ===============  =========================================
kind       shape (H, W, C)  built from
=========  ===============  =========================================
depth      32 x 64 x 1      centre-of-mass depth, skew corrected
histogram  32 x 64 x 16     background-subtracted histograms
spc256     128 x 256 x 1    median-filtered photon counts
spc64      32 x 64 x 1      median-filtered, 4x4 block-mean resized
act_i_d    32 x 64 x 2      active intensity + depth
=========  ===============  =========================================

Bins are numbered 1..16 in the documentation and 0..15 in arrays. Bin 16
is unusable: it is excluded from the median and the peak search but may
still fall inside a centre-of-mass window, where its zero count adds
nothing.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, MissingSourceError, ShapeMismatchError
from .sensor import (
    DEPTH_SHAPE,
    GRID_H,
    GRID_W,
    N_BINS,
    NO_DEPTH,
    SPAD_SCALE,
    USABLE_BINS,
    TimingConfig,
    has_depth,
)

INPUT_KINDS = ("depth", "histogram", "spc256", "spc64", "act_i_d")
INPUT_SHAPES = {
    "depth": (GRID_H, GRID_W, 1),
    "histogram": (GRID_H, GRID_W, N_BINS),
    "spc256": (GRID_H * SPAD_SCALE, GRID_W * SPAD_SCALE, 1),
    "spc64": (GRID_H, GRID_W, 1),
    "act_i_d": (GRID_H, GRID_W, 2),
}
IN_CHANNELS = {kind: shape[-1] for kind, shape in INPUT_SHAPES.items()}

DEPTH_SCALE = float(N_BINS)
INTENSITY_PERCENTILE = 99.5

_MEDIAN_INDEX = USABLE_BINS // 2
_BINS = np.arange(1, N_BINS + 1)


@dataclass(frozen=True)
class ComConfig:
    """Centre-of-mass window: ``t_l`` bins before and ``t_r`` after the peak."""
    t_l: int = 2
    t_r: int = 2

    def __post_init__(self):
        for name in ("t_l", "t_r"):
            value = getattr(self, name)
            if not 1 <= value <= USABLE_BINS:
                raise ConfigError(f"{name} must be in 1..{USABLE_BINS}, got {value}")


def _check_hist(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h)
    if h.shape[-1:] != (N_BINS,):
        raise ShapeMismatchError(f"expected a trailing axis of {N_BINS} bins, got {h.shape}")
    return h.astype(np.int64)


def background_level_frame(frame: np.ndarray) -> np.ndarray:
    """Median of bins 1..15 for every histogram of a frame (8th order statistic)."""
    h = _check_hist(frame)
    return np.asarray(np.partition(h[..., :USABLE_BINS], _MEDIAN_INDEX, axis=-1)[..., _MEDIAN_INDEX])


def background_level(h: np.ndarray) -> int:
    """
    Ambient level of one histogram: median of the 15 usable bins.

    Example:
        >>> background_level(np.r_[np.arange(1, 16), 0])
        8
    """
    return int(background_level_frame(h))


def _windows(h: np.ndarray, cfg: ComConfig):
    b = np.asarray(np.partition(h[..., :USABLE_BINS], _MEDIAN_INDEX, axis=-1)[..., _MEDIAN_INDEX])
    excess = np.maximum(h - b[..., None], 0)
    peak = np.asarray(np.argmax(h[..., :USABLE_BINS], axis=-1) + 1)
    start = np.maximum(peak - cfg.t_l, 1)
    end = np.minimum(peak + cfg.t_r, N_BINS)
    inside = (_BINS >= start[..., None]) & (_BINS <= end[..., None])
    return excess, inside


def com_depth_frame(frame: np.ndarray, cfg: ComConfig = ComConfig()) -> np.ndarray:
    """
    Centre-of-mass depth of every histogram of a frame, in bin units.

    The window ``[max(peak - t_l, 1), min(peak + t_r, 16)]`` is centred on
    the first highest usable bin; inside it each bin weighs by its excess
    over the median. Sums are integers, so the only rounding is the final
    division. Pixels whose window holds no excess get NaN.
    """
    h = _check_hist(frame)
    excess, inside = _windows(h, cfg)
    weights = np.where(inside, excess, 0)
    den = weights.sum(axis=-1)
    num = (weights * _BINS).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        depth = num / den
    return np.where(den > 0, depth, NO_DEPTH)


def com_depth(h: np.ndarray, cfg: ComConfig = ComConfig()) -> float:
    """
    Centre-of-mass depth of one histogram in bin units, NaN when no bin
    in the window exceeds the median.

    Example:
        >>> com_depth(np.array([0, 0, 0, 0, 0, 0, 10, 20, 10, 0, 0, 0, 0, 0, 0, 0]))
        8.0
    """
    return float(com_depth_frame(h, cfg))


def active_intensity_frame(frame: np.ndarray) -> np.ndarray:
    """Background-subtracted photon total of bins 1..15 for every histogram."""
    h = _check_hist(frame)
    b = np.asarray(np.partition(h[..., :USABLE_BINS], _MEDIAN_INDEX, axis=-1)[..., _MEDIAN_INDEX])
    return np.maximum(h[..., :USABLE_BINS] - b[..., None], 0).sum(axis=-1)


def active_intensity(h: np.ndarray) -> int:
    """Photons due to the laser alone in one histogram."""
    return int(active_intensity_frame(h))


def subtract_background(frame: np.ndarray) -> np.ndarray:
    """max(0, h_t - b) per bin, keeping all 16 bins."""
    h = _check_hist(frame)
    return np.maximum(h - background_level_frame(h)[..., None], 0)


def bins_to_meters(d, timing: TimingConfig = TimingConfig()):
    """Bin-unit depth to meters; the leading edge of bin 1 is ``range_offset``."""
    return (np.asarray(d, dtype=np.float64) - 1.0) * timing.bin_width * timing.speed_of_light / 2.0 \
        + timing.range_offset


def skew_correction(depth: np.ndarray, calib: np.ndarray) -> np.ndarray:
    """Subtract per-pixel calibration offsets (bins); NaN stays NaN."""
    depth = np.asarray(depth, dtype=np.float64)
    calib = np.asarray(calib, dtype=np.float64)
    if depth.shape != calib.shape:
        raise ShapeMismatchError(f"depth frame {depth.shape} and calibration {calib.shape} differ")
    return depth - calib


def median_filter_2x2(frame: np.ndarray) -> np.ndarray:
    """
    2x2 median filter anchored at the top-left of each window.

    Windows shrink at the last row and column. Even-sized windows take the
    mean of the two middle values rounded half up.
    """
    f = np.asarray(frame)
    if f.ndim != 2 or f.size == 0:
        raise ShapeMismatchError(f"expected a non-empty 2-D frame, got {f.shape}")
    x = f.astype(np.int64)
    out = x.copy()

    quad = np.sort(np.stack([x[:-1, :-1], x[:-1, 1:], x[1:, :-1], x[1:, 1:]]), axis=0)
    out[:-1, :-1] = (quad[1] + quad[2] + 1) // 2
    out[:-1, -1] = (x[:-1, -1] + x[1:, -1] + 1) // 2
    out[-1, :-1] = (x[-1, :-1] + x[-1, 1:] + 1) // 2
    return out.astype(f.dtype)


def resize_to_64(frame: np.ndarray) -> np.ndarray:
    """Non-overlapping 4x4 block mean (SPC-256 to SPC-64)."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] % SPAD_SCALE or f.shape[1] % SPAD_SCALE:
        raise ShapeMismatchError(f"frame {f.shape} is not a whole number of {SPAD_SCALE}x{SPAD_SCALE} blocks")
    rows, cols = f.shape[0] // SPAD_SCALE, f.shape[1] // SPAD_SCALE
    return f.reshape(rows, SPAD_SCALE, cols, SPAD_SCALE).sum(axis=(1, 3)) / SPAD_SCALE ** 2


@dataclass(frozen=True)
class NetworkInput:
    """A normalized network input: ``data`` is float32 (H, W, C) in [0, 1]."""
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in INPUT_SHAPES:
            raise ConfigError(f"kind must be one of {INPUT_KINDS}, got {self.kind!r}")
        if self.data.shape != INPUT_SHAPES[self.kind]:
            raise ShapeMismatchError(f"{self.kind} input must be {INPUT_SHAPES[self.kind]}, got {self.data.shape}")

    @property
    def channels(self) -> int:
        return self.data.shape[-1]

    def to_nchw(self) -> np.ndarray:
        return np.ascontiguousarray(self.data.transpose(2, 0, 1)[None])


def _normalize_depth(depth: np.ndarray) -> np.ndarray:
    scaled = np.where(has_depth(depth), depth / DEPTH_SCALE, 0.0)
    return np.clip(scaled, 0.0, 1.0)


def _normalize_intensity(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    level = np.percentile(frame, INTENSITY_PERCENTILE)
    if level <= 0:
        level = frame.max()
    if level <= 0:
        return np.zeros_like(frame)
    return np.clip(frame / level, 0.0, 1.0)


def _normalize_histogram(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    peak = frame.max()
    if peak <= 0:
        return np.zeros_like(frame)
    return frame / peak


def _with_channels(raw: np.ndarray, kind: str) -> np.ndarray:
    raw = np.asarray(raw)
    shape = INPUT_SHAPES[kind]
    if raw.shape == shape[:2] and shape[2] == 1:
        raw = raw[..., None]
    if raw.shape != shape:
        raise ShapeMismatchError(f"{kind} data must be {shape} (or {shape[:2]}), got {raw.shape}")
    return raw


def normalize(kind: str, raw) -> NetworkInput:
    """
    Scale a raw tensor into [0, 1].

    * depth: bins / 16, missing depth (NaN) becomes 0;
    * histogram: divided by the frame's largest count;
    * intensity (spc256, spc64, active intensity): divided by the frame's
      99.5th percentile and clipped, or by the maximum when that
      percentile is 0;
    * act_i_d: channel 0 as intensity, channel 1 as depth.

    An input that is already a NetworkInput of the same kind is returned
    unchanged.
    """
    if isinstance(raw, NetworkInput):
        if raw.kind != kind:
            raise ShapeMismatchError(f"cannot normalize a {raw.kind} input as {kind}")
        return raw
    if kind not in INPUT_SHAPES:
        raise ConfigError(f"kind must be one of {INPUT_KINDS}, got {kind!r}")
    raw = _with_channels(raw, kind)
    if kind == "depth":
        data = _normalize_depth(raw)
    elif kind == "histogram":
        data = _normalize_histogram(raw)
    elif kind == "act_i_d":
        data = np.stack([_normalize_intensity(raw[..., 0]), _normalize_depth(raw[..., 1])], axis=-1)
    else:
        data = _normalize_intensity(raw)
    return NetworkInput(kind, data.astype(np.float32))


def corrected_depth(hist: np.ndarray, calib: Optional[np.ndarray] = None,
                    cfg: ComConfig = ComConfig()) -> np.ndarray:
    """Histogram frame to skew-corrected depth in bins (the depth chain)."""
    depth = com_depth_frame(hist, cfg)
    return skew_correction(depth, np.zeros(depth.shape) if calib is None else calib)


def assemble_input(kind: str, hist: Optional[np.ndarray] = None, spc: Optional[np.ndarray] = None,
                   calib: Optional[np.ndarray] = None, cfg: ComConfig = ComConfig()) -> NetworkInput:
    """
    Build a normalized network input of ``kind`` from raw sensor frames.

    Args:
        kind: One of depth, histogram, spc256, spc64, act_i_d
        hist: (32, 64, 16) histogram frame (depth, histogram, act_i_d)
        spc: (128, 256) photon-counting frame (spc256, spc64)
        calib: (32, 64) skew offsets in bins, zeros when omitted

    Raises:
        MissingSourceError: if the frame the kind is built from is missing.
    """
    if kind not in INPUT_SHAPES:
        raise ConfigError(f"kind must be one of {INPUT_KINDS}, got {kind!r}")
    if kind in ("depth", "histogram", "act_i_d"):
        if hist is None:
            raise MissingSourceError(f"{kind} input needs a histogram frame")
        if np.shape(hist) != (GRID_H, GRID_W, N_BINS):
            raise ShapeMismatchError(f"histogram frame must be {(GRID_H, GRID_W, N_BINS)}, got {np.shape(hist)}")
    elif spc is None:
        raise MissingSourceError(f"{kind} input needs a photon-counting frame")
    if calib is not None and np.shape(calib) != DEPTH_SHAPE:
        raise ShapeMismatchError(f"calibration frame must be {DEPTH_SHAPE}, got {np.shape(calib)}")

    if kind == "histogram":
        return normalize(kind, subtract_background(hist))
    if kind == "depth":
        return normalize(kind, corrected_depth(hist, calib, cfg))
    if kind == "act_i_d":
        raw = np.stack([active_intensity_frame(hist), corrected_depth(hist, calib, cfg)], axis=-1)
        return normalize(kind, raw)
    filtered = median_filter_2x2(spc)
    if kind == "spc256":
        return normalize(kind, filtered)
    return normalize(kind, resize_to_64(filtered))


__all__ = [
    "INPUT_KINDS",
    "INPUT_SHAPES",
    "IN_CHANNELS",
    "ComConfig",
    "background_level",
    "background_level_frame",
    "com_depth",
    "com_depth_frame",
    "active_intensity",
    "active_intensity_frame",
    "subtract_background",
    "bins_to_meters",
    "skew_correction",
    "median_filter_2x2",
    "resize_to_64",
    "NetworkInput",
    "normalize",
    "corrected_depth",
    "assemble_input",
]
