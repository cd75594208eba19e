"""
Sensor geometry and timing constants shared by the simulator and the
histogram processing chain.

The full array is 256x256 SPADs grouped into 64x64 macropixels of 4x4
SPADs; the half-array mode modelled here reads 64x32 macropixels
(histogram mode) or 256x128 SPADs (photon-counting mode). Frames are
stored row-major as (rows, columns) = (height, width).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 2.99792458e8
N_BINS = 16
USABLE_BINS = N_BINS - 1
MAX_COUNT = 2 ** 14 - 1
MIN_BIN_WIDTH = 500e-12
FWHM_PER_SIGMA = 2.3548

GRID_W, GRID_H = 64, 32
SPAD_SCALE = 4
SPAD_W, SPAD_H = GRID_W * SPAD_SCALE, GRID_H * SPAD_SCALE

HIST_SHAPE = (GRID_H, GRID_W, N_BINS)
DEPTH_SHAPE = (GRID_H, GRID_W)
SPC256_SHAPE = (SPAD_H, SPAD_W)
SPC64_SHAPE = (GRID_H, GRID_W)

N_CLASSES = 6
N_CHANNELS = N_CLASSES + 1

# NaN marks macropixels without a depth estimate
NO_DEPTH = float("nan")


def has_depth(depth):
    """Element-wise test for a valid depth estimate."""
    return np.isfinite(depth)


@dataclass(frozen=True)
class TimingConfig:
    """
    Photon-timing parameters of the histogram mode.

    Bin ``t`` (1-based) spans round-trip times ``[(t-1)*bin_width, t*bin_width)``
    measured from the time of flight of ``range_offset``.
    """
    bin_width: float = 4.0e-9
    n_bins: int = N_BINS
    pulse_fwhm: float = 10e-9
    range_offset: float = 0.0

    speed_of_light = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.bin_width < MIN_BIN_WIDTH:
            raise ConfigError(f"bin_width must be >= {MIN_BIN_WIDTH:g} s, got {self.bin_width:g}")
        if self.n_bins != N_BINS:
            raise ConfigError(f"the sensor produces {N_BINS}-bin histograms, got n_bins={self.n_bins}")
        if self.pulse_fwhm <= 0:
            raise ConfigError(f"pulse_fwhm must be positive, got {self.pulse_fwhm:g}")
        if self.range_offset < 0:
            raise ConfigError(f"range_offset must be >= 0, got {self.range_offset:g}")

    @property
    def sigma(self) -> float:
        """Gaussian pulse standard deviation in seconds."""
        return self.pulse_fwhm / FWHM_PER_SIGMA

    @property
    def max_range(self) -> float:
        """Unambiguous range covered by the histogram, in meters."""
        return self.n_bins * self.bin_width * self.speed_of_light / 2.0

    @property
    def max_depth(self) -> float:
        return self.range_offset + self.max_range

    def round_trip(self, depth):
        """Round-trip time of flight relative to ``range_offset``."""
        return 2.0 * (np.asarray(depth, dtype=np.float64) - self.range_offset) / self.speed_of_light

    def pulse_bin_position(self, depth):
        """
        Pulse centre in bin-centre coordinates: a return centred in bin t
        maps to t, which is what the centre-of-mass estimator targets.
        """
        return self.round_trip(depth) / self.bin_width + 0.5


__all__ = [
    "SPEED_OF_LIGHT",
    "N_BINS",
    "USABLE_BINS",
    "MAX_COUNT",
    "GRID_W",
    "GRID_H",
    "SPAD_SCALE",
    "SPAD_W",
    "SPAD_H",
    "HIST_SHAPE",
    "DEPTH_SHAPE",
    "SPC256_SHAPE",
    "SPC64_SHAPE",
    "N_CLASSES",
    "N_CHANNELS",
    "NO_DEPTH",
    "has_depth",
    "TimingConfig",
]
