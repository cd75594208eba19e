"""
SpadVision Histogram Processing Tests

Tests for the processing chain:
- Background level and active intensity
- Centre-of-mass depth (against a direct per-histogram evaluation)
- Skew correction and bin-to-meter conversion
- Median filtering and resizing of photon-counting frames
- Normalization and network input assembly
"""

import math

import numpy as np
import pytest

from spadvision.errors import ConfigError, MissingSourceError, ShapeMismatchError
from spadvision.histproc import (
    INPUT_KINDS,
    INPUT_SHAPES,
    ComConfig,
    NetworkInput,
    active_intensity,
    active_intensity_frame,
    assemble_input,
    background_level,
    bins_to_meters,
    com_depth,
    com_depth_frame,
    corrected_depth,
    median_filter_2x2,
    normalize,
    resize_to_64,
    skew_correction,
    subtract_background,
)
from spadvision.sensor import GRID_H, GRID_W, MAX_COUNT, N_BINS, SPC256_SHAPE, TimingConfig, has_depth
from spadvision.simkit import IllumSpec, expected_histogram, sample_histogram, simulate_frame


def literal_com(h, t_l=2, t_r=2):
    """Centre of mass of one histogram, written out bin by bin with Python integers."""
    h = [int(v) for v in h]
    usable = h[:15]
    b = sorted(usable)[7]
    peak = usable.index(max(usable)) + 1
    start = max(peak - t_l, 1)
    end = min(peak + t_r, 16)
    num = 0
    den = 0
    for t in range(start, end + 1):
        excess = max(h[t - 1] - b, 0)
        num += t * excess
        den += excess
    if den == 0:
        return math.nan
    return num / den


def random_histograms(rng, n):
    """Poisson, flat, spike, saturated and edge-peak histograms."""
    hists = rng.poisson(rng.uniform(0.0, 60.0, (n, 1)), (n, N_BINS))
    kind = rng.integers(0, 6, n)
    peaks = rng.integers(0, 15, n)
    rows = np.arange(n)
    hists[kind == 1] = rng.integers(0, 50, ((kind == 1).sum(), 1))
    spike = kind == 2
    hists[rows[spike], peaks[spike]] += rng.integers(1, 5000, spike.sum())
    hists[kind == 3, rng.integers(0, 15)] = MAX_COUNT
    hists[kind == 4, 0] += 400
    hists[kind == 5, 14] += 400
    hists = np.minimum(hists, MAX_COUNT)
    hists[:, 15] = 0
    return hists.astype(np.uint16)


class TestBackgroundAndIntensity:
    """Test background level and active intensity."""

    def test_background_is_median_of_usable_bins(self, rng):
        """Test the 8th order statistic of bins 1..15."""
        h = np.r_[rng.permutation(np.arange(1, 16)), 999]
        assert background_level(h) == 8

    def test_background_ignores_bin_16(self):
        """Test that the unusable bin never enters the median."""
        h = np.r_[np.zeros(15, dtype=int), 5000]
        assert background_level(h) == 0

    def test_active_intensity(self):
        """Test the background-subtracted photon total."""
        h = np.array([10] * 15 + [0])
        h[6], h[7] = 30, 50
        assert active_intensity(h) == 20 + 40
        frame = np.tile(h, (2, 3, 1))
        np.testing.assert_array_equal(active_intensity_frame(frame), np.full((2, 3), 60))

    def test_subtract_background_keeps_16_bins(self):
        """Test per-bin clipping at zero."""
        h = np.array([3, 3, 3, 3, 3, 3, 9, 3, 3, 3, 3, 3, 3, 3, 1, 0])
        out = subtract_background(h)
        assert out.shape == (16,)
        assert out[6] == 6
        assert out[14] == 0
        assert out.min() == 0

    def test_wrong_bin_count(self):
        """Test that histograms need 16 bins."""
        with pytest.raises(ShapeMismatchError):
            background_level(np.zeros(15))


class TestCentreOfMass:
    """Test the centre-of-mass depth estimator."""

    def test_symmetric_peak(self):
        """Test a symmetric peak centred on bin 8."""
        h = np.array([0, 0, 0, 0, 0, 0, 10, 20, 10, 0, 0, 0, 0, 0, 0, 0])
        assert com_depth(h) == 8.0

    def test_mixed_case(self):
        """Test a noisy histogram against the bin-by-bin evaluation."""
        h = np.array([12, 11, 13, 12, 40, 90, 45, 12, 13, 11, 12, 13, 11, 12, 13, 0])
        # median 12, peak at bin 6, window 4..8: excess 0, 28, 78, 33, 0
        expected = (5 * 28 + 6 * 78 + 7 * 33) / (28 + 78 + 33)
        assert com_depth(h) == expected
        assert com_depth(h) == literal_com(h)

    def test_flat_histogram_has_no_depth(self):
        """Test that a window without excess yields NaN."""
        assert math.isnan(com_depth(np.r_[np.full(15, 7), 0]))
        assert math.isnan(com_depth(np.zeros(16, dtype=int)))

    def test_dark_pixels_marked_without_depth(self):
        """Test that dark pixels of a frame carry no depth and normalize to 0."""
        frame = np.zeros((GRID_H, GRID_W, N_BINS), dtype=np.int64)
        frame[3, 5, 6] = 40
        depth = com_depth_frame(frame)
        valid = has_depth(depth)
        assert valid.sum() == 1 and valid[3, 5]
        assert depth[3, 5] == 7.0
        scaled = normalize("depth", depth).data[..., 0]
        assert np.all(scaled[~valid] == 0.0)

    def test_window_clamps_at_edges(self):
        """Test peaks in the first and last usable bins."""
        first = np.r_[100, np.full(14, 2), 0]
        assert com_depth(first) == literal_com(first)
        assert com_depth(first, ComConfig(3, 3)) == literal_com(first, 3, 3)
        last = np.r_[np.full(14, 2), 100, 0]
        assert com_depth(last) == literal_com(last)

    def test_first_maximum_wins_ties(self):
        """Test that the earliest highest bin centres the window."""
        h = np.r_[np.full(15, 1), 0]
        h[2] = h[11] = 50
        assert com_depth(h) == 3.0

    def test_matches_direct_evaluation(self, rng):
        """Test frame-wide estimates against the per-histogram evaluation on 10^4 histograms."""
        hists = random_histograms(rng, 10_000)
        fast = com_depth_frame(hists)
        slow = np.array([literal_com(h) for h in hists])
        np.testing.assert_array_equal(fast, slow)

    @pytest.mark.slow
    def test_matches_direct_evaluation_large(self, rng):
        """Test 10^5 histograms with several window sizes."""
        hists = random_histograms(rng, 100_000)
        for t_l, t_r in ((2, 2), (1, 3), (4, 1)):
            fast = com_depth_frame(hists, ComConfig(t_l, t_r))
            slow = np.array([literal_com(h, t_l, t_r) for h in hists])
            np.testing.assert_array_equal(fast, slow)

    def test_sub_bin_precision(self, timing):
        """Test the RMSE against the true pulse position over a one-bin sweep."""
        rng = np.random.default_rng(17)
        errors = []
        for position in np.linspace(7.5, 8.5, 100, endpoint=False):
            depth = (position - 0.5) * timing.bin_width * timing.speed_of_light / 2.0
            illum = IllumSpec(1000.0 * depth ** 2, 1.0)
            means = expected_histogram(depth, 1.0, illum, timing)
            counts = sample_histogram(np.tile(means, (10, 1)), rng)
            errors.extend(com_depth_frame(counts) - position)
        assert math.sqrt(np.mean(np.square(errors))) < 0.1

    def test_window_validation(self):
        """Test window bounds."""
        with pytest.raises(ConfigError):
            ComConfig(0, 2)
        with pytest.raises(ConfigError):
            ComConfig(2, 16)


class TestDepthConversion:
    """Test skew correction and unit conversion."""

    def test_skew_correction(self):
        """Test per-pixel subtraction with NaN passing through."""
        depth = np.array([[8.0, np.nan], [3.5, 10.0]])
        calib = np.array([[0.5, 0.2], [-0.5, 0.0]])
        out = skew_correction(depth, calib)
        np.testing.assert_array_equal(out, [[7.5, np.nan], [4.0, 10.0]])
        with pytest.raises(ShapeMismatchError):
            skew_correction(depth, np.zeros((3, 3)))

    def test_bins_to_meters(self):
        """Test that bin 1 maps to the range offset and each bin adds bin_width * c / 2."""
        timing = TimingConfig(range_offset=1.5)
        assert bins_to_meters(1.0, timing) == pytest.approx(1.5)
        per_bin = timing.bin_width * timing.speed_of_light / 2.0
        assert bins_to_meters(9.0, timing) == pytest.approx(1.5 + 8 * per_bin)

    def test_corrected_depth_without_calibration(self):
        """Test that a missing calibration means zero offsets."""
        frame = np.zeros((GRID_H, GRID_W, N_BINS), dtype=np.uint16)
        frame[..., 6:9] = (10, 20, 10)
        depth = corrected_depth(frame)
        assert depth.shape == (GRID_H, GRID_W)
        np.testing.assert_array_equal(depth, 8.0)


class TestPhotonCountingFrames:
    """Test median filtering and resizing."""

    def test_constant_frame_unchanged(self):
        """Test that filtering a constant frame is the identity."""
        frame = np.full((8, 8), 5, dtype=np.uint16)
        np.testing.assert_array_equal(median_filter_2x2(frame), frame)

    def test_hot_pixel_suppressed(self):
        """Test that an isolated hot pixel disappears from full windows."""
        frame = np.zeros((6, 6), dtype=np.uint16)
        frame[2, 3] = 1000
        out = median_filter_2x2(frame)
        assert out[1:3, 2:4].max() == 0
        assert out.dtype == np.uint16

    def test_even_window_rounding(self):
        """Test the rounded mean of the two middle values."""
        out = median_filter_2x2(np.array([[1, 2], [3, 4]]))
        assert out[0, 0] == 3
        # Shrunken windows at the last column and row
        assert out[0, 1] == 3
        assert out[1, 0] == 4
        assert out[1, 1] == 4

    def test_resize_block_mean(self, rng):
        """Test the 4x4 block mean against a loop."""
        frame = rng.integers(0, 100, SPC256_SHAPE)
        out = resize_to_64(frame)
        assert out.shape == (GRID_H, GRID_W)
        assert out[3, 7] == frame[12:16, 28:32].mean()
        block = np.zeros((8, 8))
        block[0, 0] = 16
        assert resize_to_64(block)[0, 0] == 1.0
        with pytest.raises(ShapeMismatchError):
            resize_to_64(np.zeros((6, 8)))


class TestNormalization:
    """Test normalization and input assembly."""

    def test_depth_normalization(self):
        """Test bins / 16 with missing depth mapped to 0."""
        depth = np.full((GRID_H, GRID_W), 8.0)
        depth[0, 0] = np.nan
        depth[0, 1] = 40.0
        net = normalize("depth", depth)
        assert net.data.shape == INPUT_SHAPES["depth"]
        assert net.data.dtype == np.float32
        assert net.data[1, 1, 0] == 0.5
        assert net.data[0, 0, 0] == 0.0
        assert net.data[0, 1, 0] == 1.0

    def test_intensity_normalization(self):
        """Test percentile scaling with clipping of outliers."""
        frame = np.full((GRID_H, GRID_W), 10.0)
        frame[0, 0] = 1000.0
        net = normalize("spc64", frame)
        assert net.data[0, 0, 0] == 1.0
        assert net.data[5, 5, 0] == pytest.approx(1.0)
        assert normalize("spc64", np.zeros((GRID_H, GRID_W))).data.max() == 0.0

    def test_histogram_normalization(self, rng):
        """Test scaling by the frame maximum."""
        frame = rng.integers(0, 500, (GRID_H, GRID_W, N_BINS))
        net = normalize("histogram", frame)
        assert net.data.max() == pytest.approx(1.0)
        assert net.data.min() >= 0.0

    def test_network_input_passes_through(self):
        """Test that an already normalized input is returned unchanged."""
        net = normalize("depth", np.full((GRID_H, GRID_W), 4.0))
        assert normalize("depth", net) is net
        with pytest.raises(ShapeMismatchError):
            normalize("spc64", net)

    def test_shape_and_kind_validation(self):
        """Test wrong shapes and kinds."""
        with pytest.raises(ShapeMismatchError):
            normalize("depth", np.zeros((16, 16)))
        with pytest.raises(ConfigError):
            normalize("lidar", np.zeros((GRID_H, GRID_W)))
        with pytest.raises(ShapeMismatchError):
            NetworkInput("spc256", np.zeros((GRID_H, GRID_W, 1), dtype=np.float32))

    @pytest.mark.parametrize("kind", INPUT_KINDS)
    def test_assemble_every_kind(self, kind, desk_scene, bright_illum, timing, rng):
        """Test that every kind assembles to its declared shape in [0, 1]."""
        frame = simulate_frame(desk_scene, bright_illum, timing, rng)
        net = assemble_input(kind, hist=frame.hist, spc=frame.spc, calib=np.zeros((GRID_H, GRID_W)))
        assert net.kind == kind
        assert net.data.shape == INPUT_SHAPES[kind]
        assert net.data.min() >= 0.0 and net.data.max() <= 1.0
        assert net.to_nchw().shape == (1, INPUT_SHAPES[kind][2]) + INPUT_SHAPES[kind][:2]

    def test_missing_source(self):
        """Test that each kind demands the frame it is built from."""
        with pytest.raises(MissingSourceError):
            assemble_input("depth", spc=np.zeros(SPC256_SHAPE))
        with pytest.raises(MissingSourceError):
            assemble_input("spc256", hist=np.zeros((GRID_H, GRID_W, N_BINS)))
        with pytest.raises(ShapeMismatchError):
            assemble_input("histogram", hist=np.zeros((GRID_H, GRID_W, 15)))
