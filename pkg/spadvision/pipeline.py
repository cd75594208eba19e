"""
Frame pipelines: chained per-frame operations with parallel execution, and
the glue that turns dataset records into network-ready arrays.
"""

import functools
import logging
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import parallel_map
from .datakit import Example, LabelBox, augment, boxes_to_onehot
from .errors import ConfigError, DatasetError
from .histproc import (
    INPUT_KINDS,
    INPUT_SHAPES,
    ComConfig,
    NetworkInput,
    assemble_input,
    com_depth_frame,
    normalize,
    skew_correction,
)
from .io.dataset import Dataset
from .sensor import DEPTH_SHAPE

logger = logging.getLogger(__name__)


class Pipeline:
    """
    A chain of per-frame operations applied in order.

    Example:
        >>> pipeline = Pipeline()
        >>> pipeline.add(com_depth_frame)
        >>> pipeline.add(functools.partial(normalize, "depth"))
        >>> inputs = pipeline.execute(hist_frames)
    """

    def __init__(self, chunk_size: Optional[int] = None, max_workers: Optional[int] = None):
        self._operations: List[Callable[[Any], Any]] = []
        self.chunk_size = chunk_size
        self.max_workers = max_workers

    def add(self, operation: Callable[[Any], Any]) -> "Pipeline":
        self._operations.append(operation)
        return self

    def chain(self, operations: Sequence[Callable[[Any], Any]]) -> "Pipeline":
        for operation in operations:
            self.add(operation)
        return self

    def clear(self) -> None:
        self._operations.clear()

    def __call__(self, frame: Any) -> Any:
        for operation in self._operations:
            frame = operation(frame)
        return frame

    def execute(self, frames: Sequence[Any]) -> list:
        """Run the chain over every frame; results keep the input order."""
        return parallel_map(self, frames, chunk_size=self.chunk_size, max_workers=self.max_workers)

    def __len__(self) -> int:
        return len(self._operations)


def depth_pipeline(calib: Optional[np.ndarray] = None, cfg: ComConfig = ComConfig(),
                   max_workers: Optional[int] = None) -> Pipeline:
    """Histogram frame to normalized depth input: com, skew correction, scaling."""
    calib = np.zeros(DEPTH_SHAPE) if calib is None else calib
    return Pipeline(max_workers=max_workers).chain([
        functools.partial(com_depth_frame, cfg=cfg),
        functools.partial(skew_correction, calib=calib),
        functools.partial(normalize, "depth"),
    ])


def dataset_calibration(dataset: Dataset) -> Optional[np.ndarray]:
    """The dataset's skew offsets in bins, or None when it has none."""
    if not dataset.has_extra("calibration"):
        return None
    return dataset.extra("calibration")["offsets"].astype(np.float64)


def frame_input(tensors, kind: str, calib: Optional[np.ndarray] = None,
                cfg: ComConfig = ComConfig()) -> NetworkInput:
    return assemble_input(kind, hist=tensors.get("hist"), spc=tensors.get("spc"), calib=calib, cfg=cfg)


def label_scale(kind: str) -> int:
    """Factor between the label grid and the input grid of ``kind``."""
    return INPUT_SHAPES[kind][0] // DEPTH_SHAPE[0]


def target_onehot(labels: Sequence[LabelBox], kind: str) -> np.ndarray:
    """(7, h, w) float32 ground truth at the resolution of ``kind``."""
    scale = label_scale(kind)
    h, w = INPUT_SHAPES[kind][:2]
    boxes = [box.scaled(scale) for box in labels] if scale != 1 else list(labels)
    return boxes_to_onehot(boxes, h, w).transpose(2, 0, 1).astype(np.float32)


def load_examples(dataset: Dataset, ids: Sequence[int], kind: str, cfg: ComConfig = ComConfig(),
                  max_workers: Optional[int] = None) -> List[Example]:
    """Network inputs of the given frames, as examples carrying their labels."""
    if kind not in INPUT_KINDS:
        raise ConfigError(f"kind must be one of {INPUT_KINDS}, got {kind!r}")
    calib = dataset_calibration(dataset)

    def build(index):
        net = frame_input(dataset.tensors(index), kind, calib, cfg)
        return Example({"input": net.data}, dataset.labels(index), {"frame": index})

    return parallel_map(build, list(ids), max_workers=max_workers)


def stack_examples(examples: Sequence[Example], kind: str) -> Tuple[np.ndarray, np.ndarray]:
    """(inputs (n, c, h, w), targets (n, 7, h, w)) float32 arrays."""
    if not examples:
        raise DatasetError("no frames to stack")
    x = np.stack([example.tensors["input"].transpose(2, 0, 1) for example in examples]).astype(np.float32)
    y = np.stack([target_onehot(example.labels, kind) for example in examples])
    return np.ascontiguousarray(x), y


def load_arrays(dataset: Dataset, ids: Sequence[int], kind: str, with_flips: bool = False,
                cfg: ComConfig = ComConfig(), max_workers: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Network-ready arrays for a split. With ``with_flips`` the mirrored
    frames follow the originals.
    """
    examples = load_examples(dataset, ids, kind, cfg, max_workers)
    if with_flips:
        examples = augment(examples)
    logger.debug("Loaded %d %s frames from %s", len(examples), kind, dataset.path)
    return stack_examples(examples, kind)


__all__ = [
    "Pipeline",
    "depth_pipeline",
    "dataset_calibration",
    "frame_input",
    "label_scale",
    "target_onehot",
    "load_examples",
    "stack_examples",
    "load_arrays",
]
