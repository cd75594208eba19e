"""
Dataset construction: label boxes, one-hot ground truth, augmentation and
seeded train/validation splitting.

Masks are (H, W, 7) uint8 arrays: channel 0 is background, channels 1..6
the object classes. Channels are independent, so a pixel inside boxes of
two classes is 1 in both class channels.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DatasetError, ShapeMismatchError
from .sensor import GRID_H, GRID_W, N_CHANNELS, N_CLASSES

logger = logging.getLogger(__name__)

# Visualization colours, index = channel (0 background, 1..6 classes)
DEFAULT_PALETTE = np.array([
    (0, 0, 0),        # background
    (230, 25, 75),    # 1 bucket
    (60, 180, 75),    # 2 chair
    (255, 225, 25),   # 3 duck
    (0, 130, 200),    # 4 football
    (245, 130, 48),   # 5 box
    (145, 30, 180),   # 6 statue
], dtype=np.uint8)

CLASS_NAMES = ("background", "bucket", "chair", "duck", "football", "box", "statue")


@dataclass(frozen=True)
class LabelBox:
    """Axis-aligned box in pixel coordinates of the grid it labels."""
    class_id: int
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if not 1 <= self.class_id <= N_CLASSES:
            raise DatasetError(f"class_id must be in 1..{N_CLASSES}, got {self.class_id}")
        if self.w < 1 or self.h < 1:
            raise DatasetError(f"box width and height must be >= 1, got {self.w}x{self.h}")

    def check_bounds(self, height: int, width: int) -> None:
        if self.x < 0 or self.y < 0 or self.x + self.w > width or self.y + self.h > height:
            raise DatasetError(f"{self} lies outside the {width}x{height} grid")

    def scaled(self, factor: int) -> "LabelBox":
        """Same box on a grid ``factor`` times finer."""
        return LabelBox(self.class_id, self.x * factor, self.y * factor, self.w * factor, self.h * factor)

    def mask(self, height: int, width: int) -> np.ndarray:
        self.check_bounds(height, width)
        out = np.zeros((height, width), dtype=bool)
        out[self.y:self.y + self.h, self.x:self.x + self.w] = True
        return out

    def to_text(self) -> str:
        return f"{self.class_id}:{self.x},{self.y},{self.w},{self.h}"

    @classmethod
    def from_text(cls, text: str) -> "LabelBox":
        try:
            class_id, coords = text.split(":")
            x, y, w, h = (int(v) for v in coords.split(","))
            return cls(int(class_id), x, y, w, h)
        except ValueError:
            raise DatasetError(f"malformed label box {text!r}") from None


def labels_to_text(labels: Iterable[LabelBox]) -> str:
    return ";".join(box.to_text() for box in labels)


def labels_from_text(text: str) -> Tuple[LabelBox, ...]:
    return tuple(LabelBox.from_text(part) for part in text.split(";") if part.strip())


def boxes_to_onehot(labels: Iterable[LabelBox], height: int = GRID_H, width: int = GRID_W) -> np.ndarray:
    """
    Build the (H, W, 7) one-hot ground truth from label boxes.

    Raises:
        DatasetError: if a box leaves the grid.
    """
    mask = np.zeros((height, width, N_CHANNELS), dtype=np.uint8)
    for box in labels:
        box.check_bounds(height, width)
        mask[box.y:box.y + box.h, box.x:box.x + box.w, box.class_id] = 1
    mask[..., 0] = (mask[..., 1:].max(axis=-1) == 0)
    return mask


def onehot_to_rgb(mask: np.ndarray, palette: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Colour a mask: each pixel takes the colour of its highest active class
    index, background colour where no object channel is set.
    """
    if mask.ndim != 3 or mask.shape[-1] != N_CHANNELS:
        raise ShapeMismatchError(f"expected (H, W, {N_CHANNELS}) mask, got {mask.shape}")
    palette = DEFAULT_PALETTE if palette is None else np.asarray(palette, dtype=np.uint8)
    if palette.shape != (N_CHANNELS, 3):
        raise ShapeMismatchError(f"palette must be ({N_CHANNELS}, 3), got {palette.shape}")
    return palette[onehot_to_class_map(mask)]


def onehot_to_class_map(mask: np.ndarray) -> np.ndarray:
    """Per-pixel class id: the highest active object channel, 0 for background."""
    if mask.ndim != 3 or mask.shape[-1] != N_CHANNELS:
        raise ShapeMismatchError(f"expected (H, W, {N_CHANNELS}) mask, got {mask.shape}")
    active = (mask[..., 1:] > 0) * np.arange(1, N_CHANNELS)
    return active.max(axis=-1).astype(np.uint8)


def class_map_to_onehot(class_map: np.ndarray) -> np.ndarray:
    """One-hot encode a per-pixel class map (exactly one channel set per pixel)."""
    return (class_map[..., None] == np.arange(N_CHANNELS)).astype(np.uint8)


@dataclass
class Example:
    """One dataset frame: sensor tensors, labels and metadata."""
    tensors: Dict[str, np.ndarray]
    labels: Tuple[LabelBox, ...] = ()
    meta: Dict[str, object] = field(default_factory=dict)
    width: int = GRID_W


def _flip_box(box: LabelBox, width: int) -> LabelBox:
    return replace(box, x=width - box.x - box.w)


def hflip(example: Example) -> Example:
    """
    Mirror every tensor along its width axis (axis 1; the histogram bin axis
    is untouched) and mirror the boxes: x -> W - x - w.
    """
    tensors = {name: np.ascontiguousarray(np.flip(array, axis=1)) for name, array in example.tensors.items()}
    labels = tuple(_flip_box(box, example.width) for box in example.labels)
    return Example(tensors, labels, dict(example.meta), example.width)


def augment(examples: Sequence[Example]) -> List[Example]:
    """Originals followed by their horizontal flips (dataset size doubles)."""
    return list(examples) + [hflip(example) for example in examples]


def _validation_count(n: int, val_fraction: float) -> int:
    exact = Fraction(val_fraction).limit_denominator(10 ** 6)
    return math.ceil(exact * n)


def fisher_yates(n: int, rng: np.random.Generator) -> List[int]:
    """Seeded Fisher-Yates permutation of 0..n-1."""
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def shuffle_split(ids, seed: int, val_fraction: float = 0.15) -> Tuple[List[int], List[int]]:
    """
    Shuffle frame ids and split off a validation set.

    The last ceil(val_fraction * N) ids of the permutation become the
    validation set.

    Args:
        ids: Frame ids, or an int N meaning ids 0..N-1
        seed: Generator seed; the split is a pure function of (ids, seed)
        val_fraction: Validation share in [0, 1]

    Raises:
        DatasetError: for an empty dataset.
    """
    ids = list(range(ids)) if isinstance(ids, int) else list(ids)
    if not ids:
        raise DatasetError("cannot split an empty dataset")
    if not 0.0 <= val_fraction <= 1.0:
        raise DatasetError(f"val_fraction must be in [0, 1], got {val_fraction}")
    order = fisher_yates(len(ids), np.random.default_rng(seed))
    shuffled = [ids[i] for i in order]
    n_val = _validation_count(len(ids), val_fraction)
    cut = len(ids) - n_val
    return shuffled[:cut], shuffled[cut:]


__all__ = [
    "DEFAULT_PALETTE",
    "CLASS_NAMES",
    "LabelBox",
    "labels_to_text",
    "labels_from_text",
    "boxes_to_onehot",
    "onehot_to_rgb",
    "onehot_to_class_map",
    "class_map_to_onehot",
    "Example",
    "hflip",
    "augment",
    "fisher_yates",
    "shuffle_split",
]
