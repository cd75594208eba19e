"""
SpadVision - simulation, processing and object detection for single-photon
direct time-of-flight (dToF) sensors.
"""

__version__ = "0.1.0"

from .config import Config, get_chunk_size, get_worker_count, set_chunk_size, set_debug_checks, set_worker_count
from .core import ProgressTracker, parallel_map
from .executor import Executor
from .errors import (
    ChecksumError,
    ConfigError,
    DatasetError,
    EvaluationError,
    OutOfWindowError,
    ShapeMismatchError,
    SpadVisionError,
    TrainingError,
)
from .sensor import TimingConfig
from .simkit import (
    IllumSpec,
    ObjectSpec,
    SceneGenerator,
    SceneGeneratorConfig,
    SceneSpec,
    compute_sbr,
    expected_histogram,
    sample_histogram,
    simulate_dataset,
    simulate_frame,
)
from .histproc import (
    ComConfig,
    NetworkInput,
    active_intensity,
    assemble_input,
    background_level,
    com_depth,
    median_filter_2x2,
    normalize,
    resize_to_64,
    skew_correction,
)
from .datakit import LabelBox, augment, boxes_to_onehot, hflip, onehot_to_rgb, shuffle_split
from .evalkit import evaluate_frames, match_detections, metrics, paired_failure_table, welch_ttest
from .pipeline import Pipeline, depth_pipeline, load_arrays
from .io import read_dataset, write_dataset

__all__ = [
    "__version__",

    # configuration management
    "Config",
    "get_chunk_size",
    "get_worker_count",
    "set_chunk_size",
    "set_worker_count",
    "set_debug_checks",

    # parallel execution
    "Executor",
    "parallel_map",
    "ProgressTracker",
    "Pipeline",
    "depth_pipeline",

    # errors
    "SpadVisionError",
    "ConfigError",
    "OutOfWindowError",
    "ShapeMismatchError",
    "DatasetError",
    "ChecksumError",
    "TrainingError",
    "EvaluationError",

    # sensor simulation
    "TimingConfig",
    "IllumSpec",
    "ObjectSpec",
    "SceneSpec",
    "SceneGeneratorConfig",
    "SceneGenerator",
    "expected_histogram",
    "sample_histogram",
    "compute_sbr",
    "simulate_frame",
    "simulate_dataset",

    # histogram processing
    "ComConfig",
    "NetworkInput",
    "background_level",
    "com_depth",
    "active_intensity",
    "skew_correction",
    "median_filter_2x2",
    "resize_to_64",
    "normalize",
    "assemble_input",

    # datasets
    "LabelBox",
    "boxes_to_onehot",
    "onehot_to_rgb",
    "hflip",
    "augment",
    "shuffle_split",
    "load_arrays",
    "read_dataset",
    "write_dataset",

    # evaluation
    "match_detections",
    "evaluate_frames",
    "metrics",
    "paired_failure_table",
    "welch_ttest",
]
