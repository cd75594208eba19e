"""
SpadVision Simulation Tests

Tests for the synthetic sensor:
- Scene rendering and occlusion
- Histogram and photon-counting photon models
- SBR computation and illumination solving
- Random scene generation
- Per-frame seeding and dataset simulation
- Skew calibration
"""

import math

import numpy as np
import pytest
from scipy.stats import norm

from spadvision.errors import ConfigError, OutOfWindowError, UndefinedSbrError
from spadvision.io import read_dataset
from spadvision.sensor import GRID_H, GRID_W, MAX_COUNT, N_BINS, SPC256_SHAPE, USABLE_BINS, TimingConfig
from spadvision.simkit import (
    IllumSchedule,
    IllumSpec,
    ObjectSpec,
    SceneGenerator,
    SceneGeneratorConfig,
    SceneSpec,
    calibration_frame,
    classify_sbr,
    compute_sbr,
    expected_histogram,
    expected_histogram_frame,
    frame_rng,
    label_boxes,
    moving_object_sequence,
    render_scene,
    sample_histogram,
    sample_spc_frame,
    sbr_category_counts,
    sbr_to_illum,
    simulate_dataset,
    simulate_frame,
    simulate_frames,
    simulate_sequence,
)


class TestSceneRendering:
    """Test z-buffered scene rendering."""

    def test_render_backdrop_and_objects(self, desk_scene):
        """Test that object pixels carry the object's class, depth and reflectivity."""
        rendered = render_scene(desk_scene)
        assert rendered.depth.shape == (GRID_H, GRID_W)
        assert rendered.class_map[12, 10] == 4
        assert rendered.depth[12, 10] == 2.0
        assert rendered.reflectivity[12, 10] == 0.9
        assert rendered.object_map[12, 10] == 0

        # Corner is backdrop
        assert rendered.class_map[0, 0] == 0
        assert rendered.depth[0, 0] == 8.0
        assert rendered.object_map[0, 0] == -1

    def test_closer_object_occludes(self):
        """Test that the overlap takes the nearer object regardless of order."""
        far = ObjectSpec(5, "rectangle", 10.0, 4.0, 10.0, 10.0, 3.0, 0.5)
        near = ObjectSpec(1, "rectangle", 15.0, 4.0, 10.0, 10.0, 2.0, 0.5)
        for objects in ((far, near), (near, far)):
            rendered = render_scene(SceneSpec(8.0, 0.2, objects))
            assert rendered.class_map[8, 17] == 1
            assert rendered.depth[8, 17] == 2.0
            assert rendered.class_map[8, 12] == 5

    def test_depth_tie_keeps_first_object(self):
        """Test that equal depths resolve to the earlier object."""
        a = ObjectSpec(3, "rectangle", 10.0, 4.0, 10.0, 10.0, 2.0, 0.5)
        b = ObjectSpec(6, "rectangle", 15.0, 4.0, 10.0, 10.0, 2.0, 0.5)
        rendered = render_scene(SceneSpec(8.0, 0.2, (a, b)))
        assert rendered.class_map[8, 17] == 3

    def test_spad_grid_rendering(self, desk_scene):
        """Test rendering on the 4x finer SPAD grid."""
        rendered = render_scene(desk_scene, scale=4)
        assert rendered.depth.shape == SPC256_SHAPE
        assert rendered.scale == 4
        assert rendered.class_map[48, 40] == 4

    def test_object_validation(self):
        """Test that invalid objects are rejected."""
        with pytest.raises(ConfigError):
            ObjectSpec(7, "rectangle", 0.0, 0.0, 4.0, 4.0, 2.0, 0.5)
        with pytest.raises(ConfigError):
            ObjectSpec(1, "triangle", 0.0, 0.0, 4.0, 4.0, 2.0, 0.5)
        with pytest.raises(ConfigError):
            ObjectSpec(1, "rectangle", 62.0, 0.0, 4.0, 4.0, 2.0, 0.5)
        with pytest.raises(ConfigError):
            ObjectSpec(1, "rectangle", 0.0, 0.0, 4.0, 4.0, 2.0, 1.5)
        with pytest.raises(ConfigError):
            SceneSpec(-1.0, 0.2)

    def test_scene_text_form(self, desk_scene):
        """Test that the scene description stored in datasets parses back."""
        assert SceneSpec.from_text(desk_scene.to_text()) == desk_scene
        with pytest.raises(ConfigError):
            SceneSpec.from_text("8.0,0.2;4,ellipse,1,2")

    def test_label_boxes_are_tight(self, desk_scene):
        """Test that label boxes wrap the visible pixels of each object."""
        rendered = render_scene(desk_scene)
        boxes = label_boxes(rendered, desk_scene)
        assert len(boxes) == 2
        chair = boxes[1]
        assert (chair.class_id, chair.x, chair.y, chair.w, chair.h) == (2, 30, 6, 10, 16)
        football = boxes[0]
        assert football.class_id == 4
        assert 6 <= football.x and football.x + football.w <= 14


class TestPhotonModel:
    """Test the histogram and photon-counting photon models."""

    def test_expected_histogram_matches_quadrature(self, timing):
        """Test per-bin means against a numerical integration of the pulse."""
        depth, reflectivity, scale, ambient = 3.0, 0.5, 900.0, 2.0
        means = expected_histogram(depth, reflectivity, IllumSpec(scale, ambient), timing)

        mu = 2.0 * depth / timing.speed_of_light
        signal = scale * reflectivity / depth ** 2
        expected = np.zeros(N_BINS)
        for t in range(1, USABLE_BINS + 1):
            lo = (t - 1) * timing.bin_width
            step = timing.bin_width / 10_000
            centres = lo + (np.arange(10_000) + 0.5) * step
            mass = norm.pdf(centres, loc=mu, scale=timing.sigma).sum() * step
            expected[t - 1] = ambient + signal * mass

        np.testing.assert_allclose(means, expected, rtol=1e-6, atol=1e-9)
        assert means[N_BINS - 1] == 0.0

    def test_peak_bin_follows_depth(self, timing):
        """Test that the pulse lands in the bin matching its time of flight."""
        illum = IllumSpec(1000.0, 0.0)
        for t in (2, 8, 14):
            depth = (t - 0.5) * timing.bin_width * timing.speed_of_light / 2.0
            means = expected_histogram(depth, 1.0, illum, timing)
            assert int(np.argmax(means)) + 1 == t

    def test_out_of_window_depth(self, timing):
        """Test that surfaces beyond the timing window raise."""
        illum = IllumSpec(1000.0, 1.0)
        with pytest.raises(OutOfWindowError):
            expected_histogram(timing.max_depth + 0.5, 0.5, illum, timing)
        offset = TimingConfig(range_offset=1.0)
        with pytest.raises(OutOfWindowError):
            expected_histogram(0.5, 0.5, illum, offset)

    @pytest.mark.parametrize("lam", [0.5, 5.0, 50.0])
    def test_poisson_means(self, rng, lam):
        """Test per-bin empirical means over 10^4 samples against the Poisson mean."""
        n = 10_000
        means = np.full((n, N_BINS), lam)
        counts = sample_histogram(means, rng)
        empirical = counts[:, :USABLE_BINS].mean(axis=0)
        assert np.all(np.abs(empirical - lam) <= 4.0 * math.sqrt(lam / n))
        assert np.all(counts[:, N_BINS - 1] == 0)
        assert counts.dtype == np.uint16

    def test_counter_saturation(self, rng):
        """Test that counts clamp at the 14-bit counter limit."""
        counts = sample_histogram(np.full((4, N_BINS), 1e6), rng)
        assert np.all(counts[:, :USABLE_BINS] == MAX_COUNT)

    def test_spc_frame(self, desk_scene, bright_illum, timing, rng):
        """Test the photon-counting frame at both resolutions."""
        spc = sample_spc_frame(desk_scene, bright_illum, timing, rng)
        assert spc.shape == SPC256_SHAPE
        assert spc.dtype == np.uint16
        rendered = render_scene(desk_scene, scale=4)
        # The near, bright football returns far more photons than the backdrop
        assert spc[rendered.class_map == 4].mean() > spc[rendered.class_map == 0].mean()

        small = sample_spc_frame(desk_scene, bright_illum, timing, rng, resolution=(GRID_H, GRID_W))
        assert small.shape == (GRID_H, GRID_W)

    def test_exposure_scaling(self):
        """Test that both photon rates scale with exposure time."""
        illum = IllumSpec(1000.0, 2.0).for_exposure(4.0)
        assert illum.signal_scale == 2000.0
        assert illum.ambient_rate == 4.0
        with pytest.raises(ConfigError):
            IllumSpec(1000.0, 2.0).for_exposure(0.0)


class TestSbr:
    """Test signal-to-background computation and control."""

    @pytest.mark.parametrize("target", [0.05, 0.3, 1.5])
    def test_solved_illumination_hits_target(self, desk_scene, timing, target):
        """Test that sbr_to_illum produces the requested expected SBR."""
        illum = sbr_to_illum(target, desk_scene, 2000.0, timing)
        rendered = render_scene(desk_scene)
        means = expected_histogram_frame(rendered.depth, rendered.reflectivity, illum, timing)
        assert compute_sbr(means, illum.ambient_rate) == pytest.approx(target, rel=1e-9)

    def test_categories(self):
        """Test the category boundaries."""
        assert classify_sbr(0.0999) == "very low"
        assert classify_sbr(0.1) == "low"
        assert classify_sbr(0.5) == "low"
        assert classify_sbr(0.5001) == "moderate"
        assert sbr_category_counts([0.05, 0.3, 0.5, 2.0]) == {"very low": 1, "low": 2, "moderate": 1}

    def test_degenerate_frames(self, desk_scene, timing):
        """Test that an empty frame raises and a frame without ambient light has infinite SBR."""
        with pytest.raises(UndefinedSbrError):
            compute_sbr(np.zeros((GRID_H, GRID_W, N_BINS)))
        rendered = render_scene(desk_scene)
        means = expected_histogram_frame(rendered.depth, rendered.reflectivity, IllumSpec(2000.0, 0.0), timing)
        assert math.isinf(compute_sbr(means, 0.0))

    def test_measured_sbr_tracks_expected(self, desk_scene, timing, rng):
        """Test that the SBR estimated from counts is in the range of the expected one."""
        illum = sbr_to_illum(1.0, desk_scene, 20000.0, timing)
        frame = simulate_frame(desk_scene, illum, timing, rng)
        assert frame.meta["sbr"] == pytest.approx(1.0, rel=1e-9)
        assert 0.5 < frame.meta["sbr_measured"] < 2.0

    def test_invalid_target(self, desk_scene):
        """Test that non-positive targets are rejected."""
        with pytest.raises(ConfigError):
            sbr_to_illum(0.0, desk_scene, 2000.0)
        with pytest.raises(ConfigError):
            sbr_to_illum(math.inf, desk_scene, 2000.0)


class TestSceneGenerator:
    """Test random scene generation."""

    def test_generation_is_seeded(self):
        """Test that one seed always yields the same scene."""
        generator = SceneGenerator()
        assert generator.generate(frame_rng(5, 3)) == generator.generate(frame_rng(5, 3))
        assert generator.generate(frame_rng(5, 3)) != generator.generate(frame_rng(5, 4))

    def test_classes_and_spacing(self):
        """Test that all classes appear and objects never touch."""
        generator = SceneGenerator()
        seen = set()
        for i in range(200):
            scene = generator.generate(frame_rng(11, i))
            assert 1 <= len(scene.objects) <= 4
            seen.update(obj.class_id for obj in scene.objects)
            for a_index, a in enumerate(scene.objects):
                for b in scene.objects[a_index + 1:]:
                    apart_x = a.x >= b.x + b.w + 1.0 or b.x >= a.x + a.w + 1.0
                    apart_y = a.y >= b.y + b.h + 1.0 or b.y >= a.y + a.h + 1.0
                    assert apart_x or apart_y
        assert seen == {1, 2, 3, 4, 5, 6}

    def test_window_check(self):
        """Test that ranges beyond the timing window are rejected up front."""
        with pytest.raises(ConfigError):
            SceneGenerator(SceneGeneratorConfig(backdrop_depth_range=(6.0, 12.0)))

    def test_config_mapping(self):
        """Test building the generator config from flat keys."""
        cfg = SceneGeneratorConfig.from_mapping({"scene.classes": (2, 4), "scene.n_objects": (1, 2)})
        assert cfg.classes == (2, 4)
        assert cfg.n_objects == (1, 2)
        assert SceneGeneratorConfig.from_mapping(cfg.as_mapping()) == cfg
        with pytest.raises(ConfigError):
            SceneGeneratorConfig.from_mapping({"scene.colour": "red"})
        with pytest.raises(ConfigError):
            SceneGeneratorConfig(depth_range=(4.0, 1.0))

    def test_moving_sequence(self):
        """Test that the moving object advances by its velocity each frame."""
        scenes = moving_object_sequence(5, velocity=(0.75, 0.0))
        xs = [scene.objects[0].x for scene in scenes]
        np.testing.assert_allclose(np.diff(xs), 0.75)
        with pytest.raises(ConfigError):
            moving_object_sequence(30, velocity=(3.0, 0.0))


class TestFrameSimulation:
    """Test per-frame simulation and seeding."""

    def test_frame_outputs(self, desk_scene, bright_illum, timing, rng):
        """Test shapes, dtypes and metadata of a simulated frame."""
        frame = simulate_frame(desk_scene, bright_illum, timing, rng)
        assert frame.hist.shape == (GRID_H, GRID_W, N_BINS)
        assert frame.hist.dtype == np.uint16
        assert np.all(frame.hist[..., N_BINS - 1] == 0)
        assert frame.spc.shape == SPC256_SHAPE
        assert [box.class_id for box in frame.labels] == [4, 2]
        assert frame.meta["sbr"] > 0

    def test_frame_streams_are_independent(self):
        """Test that frame generators depend only on (seed, index, stream)."""
        a = frame_rng(1, 5).integers(0, 2 ** 31, 8)
        b = frame_rng(1, 5).integers(0, 2 ** 31, 8)
        c = frame_rng(1, 6).integers(0, 2 ** 31, 8)
        d = frame_rng(1, 5, stream=1).integers(0, 2 ** 31, 8)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)

    def test_results_do_not_depend_on_workers(self, small_generator_config):
        """Test that parallel simulation reproduces the single-worker frames."""
        generator = SceneGenerator(small_generator_config)
        schedule = IllumSchedule()
        serial = simulate_frames(generator, schedule, 6, seed=3, max_workers=1)
        parallel = simulate_frames(generator, schedule, 6, seed=3, max_workers=4)
        assert len(serial) == len(parallel) == 6
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a.hist, b.hist)
            np.testing.assert_array_equal(a.spc, b.spc)
            assert a.labels == b.labels

    def test_schedule_bounds(self, small_generator_config):
        """Test that drawn targets stay inside the schedule's SBR range."""
        generator = SceneGenerator(small_generator_config)
        frames = simulate_frames(generator, IllumSchedule(sbr_range=(0.2, 0.4)), 8, seed=9)
        for frame in frames:
            assert 0.2 <= frame.meta["sbr_target"] <= 0.4
            assert frame.meta["sbr"] == pytest.approx(frame.meta["sbr_target"], rel=1e-6)


class TestCalibration:
    """Test per-pixel skew calibration."""

    def test_calibration_recovers_skew(self, timing):
        """Test that the measured offsets match the simulated skew."""
        skew = np.random.default_rng(3).normal(0.0, 0.2, (GRID_H, GRID_W))
        calib = calibration_frame(timing, IllumSpec(20000.0, 2.0), skew=skew,
                                  rng=np.random.default_rng(4), n_average=16)
        assert calib.shape == (GRID_H, GRID_W)
        assert math.sqrt(np.mean((calib - skew) ** 2)) < 0.1

    def test_calibration_without_skew(self, timing):
        """Test that an unskewed sensor calibrates to near-zero offsets."""
        calib = calibration_frame(timing, IllumSpec(20000.0, 2.0), rng=np.random.default_rng(5), n_average=4)
        assert abs(float(calib.mean())) < 0.05

    def test_invalid_average(self, timing):
        """Test that at least one wall frame is required."""
        with pytest.raises(ConfigError):
            calibration_frame(timing, IllumSpec(20000.0, 2.0), n_average=0)


class TestDatasetSimulation:
    """Test dataset simulation end to end."""

    def test_splits_and_extras(self, small_dataset):
        """Test the split partition and the stored calibration frame."""
        ds = read_dataset(small_dataset.path, verify=True)
        assert len(ds) == 16
        assert len(ds.split["val"]) == 3
        assert sorted(ds.split["train"] + ds.split["val"]) == list(range(12))
        assert ds.split["test"] == [12, 13, 14, 15]
        assert ds.extra("calibration")["offsets"].shape == (GRID_H, GRID_W)
        assert ds.config["seed"] == "7"

    def test_records(self, small_dataset):
        """Test record tensors, labels and metadata."""
        ds = read_dataset(small_dataset.path)
        tensors = ds.tensors(0)
        assert tensors["hist"].shape == (GRID_H, GRID_W, N_BINS)
        assert tensors["spc"].shape == SPC256_SHAPE
        meta = ds.meta(0)
        assert meta["category"] in ("very low", "low", "moderate")
        assert 0.5 <= float(meta["sbr_target"]) <= 2.0
        scene = SceneSpec.from_text(meta["scene"])
        assert {box.class_id for box in ds.labels(0)} <= {obj.class_id for obj in scene.objects}

    def test_same_seed_same_bytes(self, tmp_path, small_generator_config):
        """Test that a dataset is a pure function of its seed."""
        paths = []
        for name in ("a", "b"):
            paths.append(simulate_dataset(tmp_path / name, small_generator_config, IllumSchedule(),
                                          n_frames=3, seed=21, n_test=1, calibration_average=1))
        assert (paths[0] / "data.bin").read_bytes() == (paths[1] / "data.bin").read_bytes()

    def test_moving_sequence_dataset(self, tmp_path):
        """Test that a scene sequence becomes a test-only dataset at constant illumination."""
        scenes = moving_object_sequence(4, velocity=(0.75, 0.0))
        path = simulate_sequence(tmp_path / "moving", scenes, 0.5, seed=2, calibration_average=1)
        ds = read_dataset(path)
        assert ds.split == {"train": [], "val": [], "test": [0, 1, 2, 3]}
        assert len({ds.meta(i)["ambient_rate"] for i in range(4)}) == 1
        with pytest.raises(ConfigError):
            simulate_sequence(tmp_path / "empty", [], 0.5, seed=2)
