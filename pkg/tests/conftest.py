"""
SpadVision Test Configuration and Fixtures

This module provides shared test fixtures and configuration for all SpadVision tests.
"""

import numpy as np
import pytest

from spadvision import Config
from spadvision.datakit import LabelBox
from spadvision.io import read_dataset
from spadvision.sensor import TimingConfig
from spadvision.simkit import (
    IllumSchedule,
    IllumSpec,
    ObjectSpec,
    SceneGeneratorConfig,
    SceneSpec,
    simulate_dataset,
)


@pytest.fixture(autouse=True)
def single_worker():
    """Run every test with one worker unless it asks for more, then restore the defaults."""
    saved = Config()
    Config(worker_count=1, chunk_size=0, error_strategy="raise", debug_checks=True).apply()
    yield
    saved.apply()


@pytest.fixture
def timing():
    """Default histogram-mode timing (4 ns bins, 10 ns pulse)."""
    return TimingConfig()


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(20240611)


@pytest.fixture
def desk_scene():
    """A football in front of a chair, both in front of a far backdrop."""
    return SceneSpec(
        backdrop_depth=8.0,
        backdrop_reflectivity=0.2,
        objects=(
            ObjectSpec(4, "ellipse", 6.0, 8.0, 8.0, 8.0, 2.0, 0.9),
            ObjectSpec(2, "rectangle", 30.0, 6.0, 10.0, 16.0, 3.0, 0.7),
        ),
    )


@pytest.fixture
def bright_illum():
    """Strong laser return over weak ambient light."""
    return IllumSpec(signal_scale=4000.0, ambient_rate=0.5)


@pytest.fixture
def sample_boxes():
    """Two non-touching label boxes on the 64x32 grid."""
    return (LabelBox(4, 6, 8, 8, 8), LabelBox(2, 30, 6, 10, 16))


@pytest.fixture(scope="session")
def small_generator_config():
    """Scene ranges for the fixture datasets: two classes, one or two objects."""
    return SceneGeneratorConfig(classes=(2, 4), n_objects=(1, 2))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, small_generator_config):
    """A 12-frame train/val + 4-frame test dataset written once per session."""
    path = tmp_path_factory.mktemp("datasets") / "small"
    return read_dataset(simulate_dataset(
        path,
        small_generator_config,
        IllumSchedule(signal_scale=2000.0, sbr_range=(0.5, 2.0)),
        n_frames=12,
        seed=7,
        n_test=4,
        val_fraction=0.25,
        calibration_average=2,
        max_workers=1,
    ))
