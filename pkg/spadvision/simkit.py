"""
Synthetic sensor outputs from parametric scenes.

A scene is a flat backdrop plus labelled rectangles and ellipses, each at a
single depth with a single reflectivity. Rendering resolves occlusion with a
z-buffer; the renderer output then drives two photon models:

* histogram mode: 16 timing bins per macropixel, Gaussian laser pulse,
  inverse-square radiometry, independent Poisson counts per bin (the
  multi-event TDC has no pile-up), 14-bit counters;
* photon-counting mode: per-SPAD Poisson counts of ambient plus laser
  photons over the exposure.

Every random draw goes through an explicit ``numpy.random.Generator``.
Frame ``i`` of a dataset uses ``SeedSequence(seed, spawn_key=(stream, i))``
so results do not depend on how frames are scheduled over workers.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtr

from .config import get_error_strategy
from .core import ProgressTracker, parallel_map
from .datakit import LabelBox, labels_to_text, shuffle_split
from .errors import ConfigError, OutOfWindowError, ShapeMismatchError, SpadVisionError, UndefinedSbrError
from .histproc import ComConfig, background_level_frame, com_depth_frame
from .sensor import (
    GRID_H,
    GRID_W,
    MAX_COUNT,
    N_BINS,
    N_CLASSES,
    SPAD_SCALE,
    SPC256_SHAPE,
    USABLE_BINS,
    TimingConfig,
    has_depth,
)

logger = logging.getLogger(__name__)

SHAPES = ("rectangle", "ellipse")
SPC_MAX_COUNT = np.iinfo(np.uint16).max

SBR_VERY_LOW = 0.1
SBR_LOW = 0.5
SBR_CATEGORIES = ("very low", "low", "moderate")

REFERENCE_EXPOSURE_MS = 2.0

# RNG stream ids under one dataset seed
STREAM_TRAIN, STREAM_TEST, STREAM_SKEW, STREAM_CALIBRATION = 0, 1, 2, 3


def frame_rng(seed: int, index: int, stream: int = STREAM_TRAIN) -> np.random.Generator:
    """Generator for one frame, independent of every other frame's stream."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


@dataclass(frozen=True)
class IllumSpec:
    """
    Illumination of one exposure.

    Attributes:
        signal_scale: Expected laser photons per exposure from a surface of
            reflectivity 1 at 1 m.
        ambient_rate: Expected ambient photons per bin per macropixel per
            exposure (dark counts folded in).
    """
    signal_scale: float
    ambient_rate: float

    def __post_init__(self):
        if not self.signal_scale >= 0 or not self.ambient_rate >= 0:
            raise ConfigError(f"illumination must be non-negative, got {self}")

    def for_exposure(self, exposure_ms: float, reference_ms: float = REFERENCE_EXPOSURE_MS) -> "IllumSpec":
        """Scale both photon rates linearly from the reference exposure."""
        if exposure_ms <= 0 or reference_ms <= 0:
            raise ConfigError(f"exposure must be positive, got {exposure_ms} ms")
        factor = exposure_ms / reference_ms
        return IllumSpec(self.signal_scale * factor, self.ambient_rate * factor)


@dataclass(frozen=True)
class ObjectSpec:
    """
    Labelled planar surface facing the sensor.

    ``x, y, w, h`` is the shape's bounding box in macropixel coordinates
    (x along the 64-wide axis). Ellipses are inscribed in that box.
    """
    class_id: int
    shape: str
    x: float
    y: float
    w: float
    h: float
    depth: float
    reflectivity: float

    def __post_init__(self):
        if not 1 <= self.class_id <= N_CLASSES:
            raise ConfigError(f"class_id must be in 1..{N_CLASSES}, got {self.class_id}")
        if self.shape not in SHAPES:
            raise ConfigError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.w <= 0 or self.h <= 0:
            raise ConfigError(f"object size must be positive, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0 or self.x + self.w > GRID_W or self.y + self.h > GRID_H:
            raise ConfigError(f"object {self.x},{self.y},{self.w},{self.h} leaves the {GRID_W}x{GRID_H} grid")
        if self.depth <= 0:
            raise ConfigError(f"object depth must be positive, got {self.depth}")
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ConfigError(f"reflectivity must be in [0, 1], got {self.reflectivity}")

    def coverage(self, scale: int = 1) -> np.ndarray:
        """
        Boolean coverage on a grid ``scale`` times finer than the macropixel
        grid, evaluated at pixel centres.
        """
        cols = (np.arange(GRID_W * scale) + 0.5) / scale
        rows = (np.arange(GRID_H * scale) + 0.5) / scale
        if self.shape == "rectangle":
            in_x = (cols >= self.x) & (cols < self.x + self.w)
            in_y = (rows >= self.y) & (rows < self.y + self.h)
            return in_y[:, None] & in_x[None, :]
        u = (cols - (self.x + self.w / 2.0)) / (self.w / 2.0)
        v = (rows - (self.y + self.h / 2.0)) / (self.h / 2.0)
        return v[:, None] ** 2 + u[None, :] ** 2 <= 1.0

    def to_text(self) -> str:
        return ",".join([str(self.class_id), self.shape] + [repr(float(v)) for v in
                        (self.x, self.y, self.w, self.h, self.depth, self.reflectivity)])

    @classmethod
    def from_text(cls, text: str) -> "ObjectSpec":
        parts = text.split(",")
        if len(parts) != 8:
            raise ConfigError(f"malformed object {text!r}")
        try:
            numbers = [float(v) for v in parts[2:]]
            return cls(int(parts[0]), parts[1], *numbers)
        except ValueError:
            raise ConfigError(f"malformed object {text!r}") from None


@dataclass(frozen=True)
class SceneSpec:
    """Backdrop plus objects; object order breaks depth ties (first wins)."""
    backdrop_depth: float
    backdrop_reflectivity: float
    objects: Tuple[ObjectSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.backdrop_depth <= 0:
            raise ConfigError(f"backdrop depth must be positive, got {self.backdrop_depth}")
        if not 0.0 <= self.backdrop_reflectivity <= 1.0:
            raise ConfigError(f"backdrop reflectivity must be in [0, 1], got {self.backdrop_reflectivity}")

    def check_window(self, timing: TimingConfig) -> None:
        """Raise OutOfWindowError if any surface lies outside the timing window."""
        for depth in [self.backdrop_depth] + [obj.depth for obj in self.objects]:
            _check_depth(depth, timing)

    def to_text(self) -> str:
        head = f"{self.backdrop_depth!r},{self.backdrop_reflectivity!r}"
        return ";".join([head] + [obj.to_text() for obj in self.objects])

    @classmethod
    def from_text(cls, text: str) -> "SceneSpec":
        head, *objects = text.split(";")
        try:
            depth, reflectivity = (float(v) for v in head.split(","))
        except ValueError:
            raise ConfigError(f"malformed scene header {head!r}") from None
        return cls(depth, reflectivity, tuple(ObjectSpec.from_text(o) for o in objects if o))


@dataclass
class RenderedScene:
    """
    Per-pixel surface properties. ``object_map`` holds the index of the
    visible object in ``SceneSpec.objects`` or -1 for the backdrop.
    """
    depth: np.ndarray
    reflectivity: np.ndarray
    class_map: np.ndarray
    object_map: np.ndarray

    @property
    def scale(self) -> int:
        return self.depth.shape[1] // GRID_W


def render_scene(scene: SceneSpec, scale: int = 1) -> RenderedScene:
    """
    Z-buffer the scene onto the macropixel grid (``scale=1``) or a grid
    ``scale`` times finer (``scale=4`` is the SPAD grid).

    Example:
        >>> r = render_scene(SceneSpec(5.0, 0.3))
        >>> float(r.depth.max()), int(r.class_map.max())
        (5.0, 0)
    """
    shape = (GRID_H * scale, GRID_W * scale)
    depth = np.full(shape, float(scene.backdrop_depth))
    reflectivity = np.full(shape, float(scene.backdrop_reflectivity))
    class_map = np.zeros(shape, dtype=np.uint8)
    object_map = np.full(shape, -1, dtype=np.int32)
    for index, obj in enumerate(scene.objects):
        closer = obj.coverage(scale) & (obj.depth < depth)
        depth[closer] = obj.depth
        reflectivity[closer] = obj.reflectivity
        class_map[closer] = obj.class_id
        object_map[closer] = index
    return RenderedScene(depth, reflectivity, class_map, object_map)


def _check_depth(depth, timing: TimingConfig) -> None:
    depth = np.asarray(depth, dtype=np.float64)
    bad = ~((depth > 0) & (depth >= timing.range_offset) & (depth <= timing.max_depth))
    if np.any(bad):
        worst = depth[bad].flat[0]
        raise OutOfWindowError(
            f"depth {worst:g} m outside the timing window "
            f"[{timing.range_offset:g}, {timing.max_depth:g}] m"
        )


def _bin_masses(depth, timing: TimingConfig, skew=0.0) -> np.ndarray:
    """Fraction of the pulse falling in each of the 15 usable bins, shape (..., 15)."""
    mu = timing.round_trip(depth) + np.asarray(skew, dtype=np.float64) * timing.bin_width
    edges = np.arange(USABLE_BINS + 1) * timing.bin_width
    cdf = ndtr((edges - mu[..., None]) / timing.sigma)
    return np.diff(cdf, axis=-1)


def signal_photons(depth, reflectivity, signal_scale: float):
    """Inverse-square laser return: signal_scale * reflectivity / depth^2."""
    depth = np.asarray(depth, dtype=np.float64)
    return signal_scale * np.asarray(reflectivity, dtype=np.float64) / depth ** 2


def expected_histogram(depth: float, reflectivity: float, illum: IllumSpec,
                       timing: TimingConfig = TimingConfig()) -> np.ndarray:
    """
    Mean counts of the 16 bins for one macropixel.

    Bins 1..15 hold ``ambient_rate`` plus the signal mass the Gaussian pulse
    deposits between the bin edges; bin 16 is always 0.

    Raises:
        OutOfWindowError: if ``depth`` lies outside the timing window.
    """
    return expected_histogram_frame(np.asarray(depth), np.asarray(reflectivity), illum, timing)


def expected_histogram_frame(depth: np.ndarray, reflectivity: np.ndarray, illum: IllumSpec,
                             timing: TimingConfig = TimingConfig(), skew=None) -> np.ndarray:
    """
    Vectorised expected_histogram over a depth map, shape (..., 16).

    ``skew`` (bins, broadcastable to ``depth``) delays each pixel's pulse to
    model per-pixel timing skew.
    """
    if np.shape(depth) != np.shape(reflectivity):
        raise ShapeMismatchError(f"depth {np.shape(depth)} and reflectivity {np.shape(reflectivity)} differ")
    _check_depth(depth, timing)
    signal = signal_photons(depth, reflectivity, illum.signal_scale)
    means = np.zeros(np.shape(depth) + (N_BINS,))
    means[..., :USABLE_BINS] = illum.ambient_rate + signal[..., None] * _bin_masses(
        depth, timing, 0.0 if skew is None else skew)
    return means


def sample_histogram(means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Poisson counts for an array of mean histograms (last axis = 16 bins),
    clamped to the 14-bit counter and with bin 16 forced to 0.
    """
    means = np.asarray(means, dtype=np.float64)
    if means.shape[-1:] != (N_BINS,):
        raise ShapeMismatchError(f"expected a trailing axis of {N_BINS} bins, got {means.shape}")
    counts = np.minimum(rng.poisson(means), MAX_COUNT).astype(np.uint16)
    counts[..., N_BINS - 1] = 0
    return counts


def _window_signal(rendered: RenderedScene, signal_scale: float, timing: TimingConfig, skew=None):
    """Laser photons inside bins 1..15 per pixel of a rendered scene."""
    masses = _bin_masses(rendered.depth, timing, 0.0 if skew is None else skew)
    return signal_photons(rendered.depth, rendered.reflectivity, signal_scale) * masses.sum(axis=-1)


def sample_spc_frame(scene: SceneSpec, illum: IllumSpec, timing: TimingConfig,
                     rng: np.random.Generator, resolution: Tuple[int, int] = SPC256_SHAPE) -> np.ndarray:
    """
    Photon-counting frame: each pixel counts ambient light over the 15
    usable bin periods plus the laser return of its own surface.

    Args:
        resolution: (rows, cols), either (128, 256) for SPC-256 (shapes
            evaluated on the SPAD grid) or (32, 64) for SPC-64.
    """
    if resolution not in ((GRID_H * SPAD_SCALE, GRID_W * SPAD_SCALE), (GRID_H, GRID_W)):
        raise ShapeMismatchError(f"unsupported SPC resolution {resolution}")
    scene.check_window(timing)
    rendered = render_scene(scene, scale=resolution[1] // GRID_W)
    mean = USABLE_BINS * illum.ambient_rate + _window_signal(rendered, illum.signal_scale, timing)
    return np.minimum(rng.poisson(mean), SPC_MAX_COUNT).astype(np.uint16)


def compute_sbr(data: np.ndarray, ambient_rate: Optional[float] = None) -> float:
    """
    Signal-to-background ratio over all macropixels and bins 1..15.

    With ``ambient_rate`` the input is taken as expected means: signal is
    everything above the ambient level. Without it the input is sampled
    counts: signal is the excess over each pixel's median bin, ambient is
    the rest.

    Returns:
        float: SBR, ``inf`` when the background is exactly 0

    Raises:
        UndefinedSbrError: if the frame holds no photons at all.
    """
    data = np.asarray(data)
    if data.shape[-1:] != (N_BINS,) or data.size == 0:
        raise ShapeMismatchError(f"expected (..., {N_BINS}) histograms, got {data.shape}")
    usable = data[..., :USABLE_BINS].astype(np.float64)
    total = usable.sum()
    if total == 0:
        raise UndefinedSbrError("SBR is undefined for a frame without photons")
    if ambient_rate is not None:
        ambient = float(ambient_rate) * usable.size
        signal = total - ambient
    else:
        b = background_level_frame(data).astype(np.float64)
        signal = np.maximum(usable - b[..., None], 0.0).sum()
        ambient = total - signal
    if ambient <= 0:
        return math.inf
    return float(max(signal, 0.0) / ambient)


def classify_sbr(sbr: float) -> str:
    """Category of a frame: below 0.1 very low, up to 0.5 low, above moderate."""
    if sbr < SBR_VERY_LOW:
        return "very low"
    if sbr <= SBR_LOW:
        return "low"
    return "moderate"


def sbr_category_counts(sbrs: Sequence[float]) -> Dict[str, int]:
    counts = dict.fromkeys(SBR_CATEGORIES, 0)
    for sbr in sbrs:
        counts[classify_sbr(sbr)] += 1
    return counts


def sbr_to_illum(target_sbr: float, scene: SceneSpec, signal_scale: float,
                 timing: TimingConfig = TimingConfig(), skew=None) -> IllumSpec:
    """
    Illumination whose expected SBR on ``scene`` equals ``target_sbr``.

    Expected SBR is linear in 1/ambient_rate, so the ambient rate follows in
    closed form from the scene's in-window signal.
    """
    if not target_sbr > 0 or math.isinf(target_sbr):
        raise ConfigError(f"target SBR must be positive and finite, got {target_sbr}")
    scene.check_window(timing)
    signal = _window_signal(render_scene(scene), signal_scale, timing, skew).sum()
    ambient = signal / (target_sbr * USABLE_BINS * GRID_H * GRID_W)
    return IllumSpec(signal_scale, float(ambient))


@dataclass(frozen=True)
class ObjectArchetype:
    """Shape and size ranges (macropixels) that give a class its look."""
    shape: str
    width: Tuple[float, float]
    height: Tuple[float, float]


DEFAULT_ARCHETYPES = {
    1: ObjectArchetype("rectangle", (6.0, 9.0), (8.0, 12.0)),    # bucket
    2: ObjectArchetype("rectangle", (8.0, 11.0), (12.0, 18.0)),  # chair
    3: ObjectArchetype("ellipse", (8.0, 12.0), (5.0, 8.0)),      # duck
    4: ObjectArchetype("ellipse", (5.0, 8.0), (5.0, 8.0)),       # football
    5: ObjectArchetype("rectangle", (10.0, 16.0), (8.0, 12.0)),  # box
    6: ObjectArchetype("ellipse", (5.0, 7.0), (14.0, 20.0)),     # statue
}

_POSITION_STEP = 0.25
_OBJECT_GAP = 1.0


def _as_range(value, name: str) -> Tuple[float, float]:
    if isinstance(value, (int, float)):
        value = (value, value)
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a (low, high) pair, got {value!r}") from None
    if lo > hi:
        raise ConfigError(f"{name} low bound {lo} exceeds high bound {hi}")
    return lo, hi


@dataclass(frozen=True)
class SceneGeneratorConfig:
    """Ranges the scene generator draws from (all uniform)."""
    classes: Tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    n_objects: Tuple[int, int] = (1, 4)
    depth_range: Tuple[float, float] = (1.0, 4.0)
    reflectivity_range: Tuple[float, float] = (0.4, 1.0)
    backdrop_depth_range: Tuple[float, float] = (6.0, 9.0)
    backdrop_reflectivity_range: Tuple[float, float] = (0.1, 0.4)
    allow_overlap: bool = False
    max_attempts: int = 50

    def __post_init__(self):
        classes = tuple(int(c) for c in np.atleast_1d(self.classes))
        if not classes or any(not 1 <= c <= N_CLASSES for c in classes):
            raise ConfigError(f"classes must be non-empty ids in 1..{N_CLASSES}, got {self.classes}")
        object.__setattr__(self, "classes", classes)
        lo, hi = _as_range(self.n_objects, "n_objects")
        if lo < 0:
            raise ConfigError(f"n_objects must be >= 0, got {self.n_objects}")
        object.__setattr__(self, "n_objects", (int(lo), int(hi)))
        for name in ("depth_range", "reflectivity_range", "backdrop_depth_range", "backdrop_reflectivity_range"):
            object.__setattr__(self, name, _as_range(getattr(self, name), name))
        if self.depth_range[0] <= 0 or self.backdrop_depth_range[0] <= 0:
            raise ConfigError("depth ranges must be positive")
        for name in ("reflectivity_range", "backdrop_reflectivity_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi > 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {(lo, hi)}")
        if self.max_attempts < 1:
            raise ConfigError(f"max_attempts must be >= 1, got {self.max_attempts}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], prefix: str = "scene.") -> "SceneGeneratorConfig":
        """Build from flat config keys such as ``scene.depth_range = 1.0, 4.0``."""
        kwargs = {key[len(prefix):]: value for key, value in values.items() if key.startswith(prefix)}
        unknown = set(kwargs) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scene keys: {', '.join(sorted(prefix + k for k in unknown))}")
        return cls(**kwargs)

    def as_mapping(self, prefix: str = "scene.") -> Dict[str, Any]:
        return {prefix + name: getattr(self, name) for name in self.__dataclass_fields__}


def _quantize(value: float) -> float:
    return math.floor(value / _POSITION_STEP) * _POSITION_STEP


class SceneGenerator:
    """
    Seeded random scenes. Objects are placed without touching each other
    (one macropixel gap) unless ``allow_overlap`` is set, in which case
    nearer objects partially occlude farther ones.
    """

    def __init__(self, config: SceneGeneratorConfig = SceneGeneratorConfig(),
                 timing: TimingConfig = TimingConfig(),
                 archetypes: Optional[Mapping[int, ObjectArchetype]] = None):
        self.config = config
        self.timing = timing
        self.archetypes = dict(DEFAULT_ARCHETYPES if archetypes is None else archetypes)
        missing = [c for c in config.classes if c not in self.archetypes]
        if missing:
            raise ConfigError(f"no archetype for classes {missing}")
        farthest = max(config.backdrop_depth_range[1], config.depth_range[1])
        if farthest > timing.max_depth:
            raise ConfigError(
                f"scene depth {farthest} m exceeds the "
                f"{timing.max_depth:.2f} m timing window"
            )

    def _draw_object(self, rng: np.random.Generator) -> ObjectSpec:
        cfg = self.config
        class_id = cfg.classes[int(rng.integers(len(cfg.classes)))]
        arch = self.archetypes[class_id]
        w = _quantize(rng.uniform(*arch.width))
        h = _quantize(rng.uniform(*arch.height))
        x = _quantize(rng.uniform(0.0, GRID_W - w))
        y = _quantize(rng.uniform(0.0, GRID_H - h))
        return ObjectSpec(
            class_id=class_id,
            shape=arch.shape,
            x=x, y=y, w=w, h=h,
            depth=float(rng.uniform(*cfg.depth_range)),
            reflectivity=float(rng.uniform(*cfg.reflectivity_range)),
        )

    @staticmethod
    def _collides(obj: ObjectSpec, placed: Sequence[ObjectSpec]) -> bool:
        for other in placed:
            if (obj.x < other.x + other.w + _OBJECT_GAP and other.x < obj.x + obj.w + _OBJECT_GAP
                    and obj.y < other.y + other.h + _OBJECT_GAP and other.y < obj.y + obj.h + _OBJECT_GAP):
                return True
        return False

    def generate(self, rng: np.random.Generator) -> SceneSpec:
        cfg = self.config
        n_objects = int(rng.integers(cfg.n_objects[0], cfg.n_objects[1] + 1))
        objects: List[ObjectSpec] = []
        for _ in range(n_objects):
            for _attempt in range(cfg.max_attempts):
                obj = self._draw_object(rng)
                if cfg.allow_overlap or not self._collides(obj, objects):
                    objects.append(obj)
                    break
            else:
                logger.debug("No room for object %d after %d attempts", len(objects), cfg.max_attempts)
        return SceneSpec(
            backdrop_depth=float(rng.uniform(*cfg.backdrop_depth_range)),
            backdrop_reflectivity=float(rng.uniform(*cfg.backdrop_reflectivity_range)),
            objects=tuple(objects),
        )


def moving_object_sequence(n_frames: int, class_id: int = 4, shape: str = "ellipse",
                           start: Tuple[float, float] = (2.0, 12.0), velocity: Tuple[float, float] = (3.0, 0.0),
                           size: Tuple[float, float] = (6.0, 6.0), depth: float = 2.5,
                           reflectivity: float = 0.8, backdrop_depth: float = 8.0,
                           backdrop_reflectivity: float = 0.2) -> List[SceneSpec]:
    """
    One object translating across the field of view by ``velocity``
    macropixels per frame, as seen by a high-frame-rate capture.

    Raises:
        ConfigError: if the object would leave the grid within ``n_frames``.
    """
    scenes = []
    for i in range(n_frames):
        x = start[0] + velocity[0] * i
        y = start[1] + velocity[1] * i
        obj = ObjectSpec(class_id, shape, x, y, size[0], size[1], depth, reflectivity)
        scenes.append(SceneSpec(backdrop_depth, backdrop_reflectivity, (obj,)))
    return scenes


def label_boxes(rendered: RenderedScene, scene: SceneSpec) -> Tuple[LabelBox, ...]:
    """Tight boxes around the visible pixels of each object, in object order."""
    boxes = []
    for index, obj in enumerate(scene.objects):
        rows, cols = np.nonzero(rendered.object_map == index)
        if rows.size == 0:
            continue
        boxes.append(LabelBox(obj.class_id, int(cols.min()), int(rows.min()),
                              int(cols.max() - cols.min() + 1), int(rows.max() - rows.min() + 1)))
    return tuple(boxes)


@dataclass
class SimulatedFrame:
    """Histogram frame, SPC-256 frame and labels of one scene."""
    hist: np.ndarray
    spc: np.ndarray
    labels: Tuple[LabelBox, ...]
    scene: SceneSpec
    meta: Dict[str, Any] = field(default_factory=dict)


def simulate_frame(scene: SceneSpec, illum: IllumSpec, timing: TimingConfig,
                   rng: np.random.Generator, skew: Optional[np.ndarray] = None) -> SimulatedFrame:
    """
    Simulate both sensor outputs for one scene.

    The histogram and photon-counting frames come from consecutive
    exposures of the time-interleaved mode, so their photon draws are
    independent.
    """
    rendered = render_scene(scene)
    means = expected_histogram_frame(rendered.depth, rendered.reflectivity, illum, timing, skew)
    hist = sample_histogram(means, rng)
    spc = sample_spc_frame(scene, illum, timing, rng)
    meta = {
        "sbr": compute_sbr(means, illum.ambient_rate) if means[..., :USABLE_BINS].any() else 0.0,
        "sbr_measured": compute_sbr(hist) if hist.any() else 0.0,
        "ambient_rate": illum.ambient_rate,
        "signal_scale": illum.signal_scale,
    }
    return SimulatedFrame(hist, spc, label_boxes(rendered, scene), scene, meta)


def default_wall_depth(timing: TimingConfig = TimingConfig()) -> float:
    """Depth whose pulse is centred in bin 8."""
    return timing.range_offset + 7.5 * timing.bin_width * timing.speed_of_light / 2.0


def simulate_wall(wall_depth: float, illum: IllumSpec, timing: TimingConfig,
                  rng: np.random.Generator, skew: Optional[np.ndarray] = None,
                  reflectivity: float = 1.0) -> np.ndarray:
    """Histogram frame of a flat wall filling the field of view."""
    depth = np.full((GRID_H, GRID_W), float(wall_depth))
    means = expected_histogram_frame(depth, np.full_like(depth, reflectivity), illum, timing, skew)
    return sample_histogram(means, rng)


def calibration_frame(timing: TimingConfig, illum: IllumSpec, wall_depth: Optional[float] = None,
                      skew: Optional[np.ndarray] = None, rng: Optional[np.random.Generator] = None,
                      n_average: int = 16, com: ComConfig = ComConfig()) -> np.ndarray:
    """
    Per-pixel timing offsets in bins, measured on a simulated flat wall.

    The centre-of-mass depth of ``n_average`` wall frames is averaged per
    pixel and the known pulse position is subtracted. Pixels that never
    produced a depth get offset 0.
    """
    if n_average < 1:
        raise ConfigError(f"n_average must be >= 1, got {n_average}")
    rng = np.random.default_rng() if rng is None else rng
    wall_depth = default_wall_depth(timing) if wall_depth is None else wall_depth
    estimates = np.stack([
        com_depth_frame(simulate_wall(wall_depth, illum, timing, rng, skew), com)
        for _ in range(n_average)
    ])
    valid = has_depth(estimates)
    counts = valid.sum(axis=0)
    mean = np.where(valid, estimates, 0.0).sum(axis=0) / np.maximum(counts, 1)
    residual = mean - float(timing.pulse_bin_position(wall_depth))
    return np.where(counts > 0, residual, 0.0)


@dataclass(frozen=True)
class IllumSchedule:
    """
    Per-frame illumination: a target SBR drawn log-uniformly from
    ``sbr_range`` and an exposure drawn from ``exposures_ms``.
    """
    signal_scale: float = 2000.0
    sbr_range: Tuple[float, float] = (0.5, 2.0)
    exposures_ms: Tuple[float, ...] = (REFERENCE_EXPOSURE_MS,)

    def __post_init__(self):
        lo, hi = _as_range(self.sbr_range, "sbr_range")
        if lo <= 0:
            raise ConfigError(f"sbr_range must be positive, got {self.sbr_range}")
        object.__setattr__(self, "sbr_range", (lo, hi))
        exposures = tuple(float(e) for e in np.atleast_1d(self.exposures_ms))
        if not exposures or min(exposures) <= 0:
            raise ConfigError(f"exposures_ms must be positive, got {self.exposures_ms}")
        object.__setattr__(self, "exposures_ms", exposures)
        if self.signal_scale <= 0:
            raise ConfigError(f"signal_scale must be positive, got {self.signal_scale}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], prefix: str = "illum.") -> "IllumSchedule":
        kwargs = {key[len(prefix):]: value for key, value in values.items() if key.startswith(prefix)}
        unknown = set(kwargs) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown illumination keys: {', '.join(sorted(prefix + k for k in unknown))}")
        return cls(**kwargs)

    def draw(self, scene: SceneSpec, timing: TimingConfig, rng: np.random.Generator,
             skew=None) -> Tuple[IllumSpec, float, float]:
        """Return (illumination, target SBR, exposure in ms) for one frame."""
        lo, hi = self.sbr_range
        target = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        exposure = self.exposures_ms[int(rng.integers(len(self.exposures_ms)))]
        scale = self.signal_scale * exposure / REFERENCE_EXPOSURE_MS
        return sbr_to_illum(target, scene, scale, timing, skew), target, exposure


def _simulate_indexed(job) -> Optional[SimulatedFrame]:
    seed, index, stream, generator, schedule, timing, skew = job
    rng = frame_rng(seed, index, stream)
    try:
        scene = generator.generate(rng)
        illum, target, exposure = schedule.draw(scene, timing, rng, skew)
        frame = simulate_frame(scene, illum, timing, rng, skew)
    except SpadVisionError as exc:
        if get_error_strategy() == "skip":
            logger.warning("Skipping frame %d of stream %d: %s", index, stream, exc)
            return None
        raise
    frame.meta.update(seed=seed, frame=index, exposure_ms=exposure, sbr_target=target,
                      category=classify_sbr(frame.meta["sbr"]))
    logger.debug("Frame %d: %d objects, sbr %.4f", index, len(scene.objects), frame.meta["sbr"])
    return frame


def simulate_frames(generator: SceneGenerator, schedule: IllumSchedule, n_frames: int, seed: int,
                    stream: int = STREAM_TRAIN, skew: Optional[np.ndarray] = None,
                    max_workers: Optional[int] = None) -> List[SimulatedFrame]:
    """Simulate ``n_frames`` random frames in parallel; order follows frame index."""
    jobs = [(seed, i, stream, generator, schedule, generator.timing, skew) for i in range(n_frames)]
    frames = parallel_map(_simulate_indexed, jobs, max_workers=max_workers)
    return [frame for frame in frames if frame is not None]


def _frame_meta(frame: SimulatedFrame) -> Dict[str, str]:
    meta = {key: repr(value) if isinstance(value, float) else str(value) for key, value in frame.meta.items()}
    meta["scene"] = frame.scene.to_text()
    return meta


def simulate_dataset(path: Union[str, Path], generator_config: SceneGeneratorConfig,
                     schedule: IllumSchedule, n_frames: int, seed: int,
                     timing: TimingConfig = TimingConfig(), n_test: int = 0,
                     test_generator_config: Optional[SceneGeneratorConfig] = None,
                     val_fraction: float = 0.15, skew_sigma: float = 0.3,
                     calibration_average: int = 16, max_workers: Optional[int] = None,
                     config_echo: Optional[Mapping[str, Any]] = None) -> Path:
    """
    Simulate a dataset and write it to ``path``.

    Training frames are split into train/validation with shuffle_split;
    ``n_test`` extra frames (optionally from a different generator) form the
    test split. The sensor's per-pixel skew is drawn once per dataset and
    its calibration frame is stored alongside the records.

    Returns:
        Path: the dataset directory
    """
    if n_frames < 0 or n_test < 0:
        raise ConfigError(f"frame counts must be >= 0, got {n_frames} and {n_test}")
    generator = SceneGenerator(generator_config, timing)
    test_generator = SceneGenerator(test_generator_config or generator_config, timing)
    skew = frame_rng(seed, 0, STREAM_SKEW).normal(0.0, skew_sigma, (GRID_H, GRID_W)) if skew_sigma > 0 else None

    with ProgressTracker(total=n_frames + n_test, desc="Simulating", log=logger) as progress:
        frames = simulate_frames(generator, schedule, n_frames, seed, STREAM_TRAIN, skew, max_workers)
        progress.update(n_frames)
        test_frames = simulate_frames(test_generator, schedule, n_test, seed, STREAM_TEST, skew, max_workers)
        progress.update(n_test)

    calib_illum = IllumSpec(schedule.signal_scale, schedule.signal_scale * 1e-4)
    calib = calibration_frame(timing, calib_illum, skew=skew,
                              rng=frame_rng(seed, 0, STREAM_CALIBRATION),
                              n_average=calibration_average)

    train_ids, val_ids = shuffle_split(len(frames), seed, val_fraction) if frames else ([], [])
    test_ids = list(range(len(frames), len(frames) + len(test_frames)))

    echo = dict(config_echo or {})
    echo.update(generator_config.as_mapping())
    echo.update({"seed": seed, "n_frames": n_frames, "n_test": n_test, "skew_sigma": skew_sigma,
                 "illum.signal_scale": schedule.signal_scale, "illum.sbr_range": schedule.sbr_range,
                 "illum.exposures_ms": schedule.exposures_ms,
                 "timing.bin_width": timing.bin_width, "timing.pulse_fwhm": timing.pulse_fwhm,
                 "timing.range_offset": timing.range_offset})

    return _write_frames(path, frames + test_frames, calib, echo,
                         train=train_ids, val=val_ids, test=test_ids)


def _write_frames(path, frames: Sequence[SimulatedFrame], calib: np.ndarray,
                  echo: Mapping[str, Any], **split) -> Path:
    from .io.dataset import DatasetWriter

    with DatasetWriter(path, config=echo) as writer:
        writer.add_extra("calibration", {"offsets": calib.astype(np.float32)})
        for frame in frames:
            writer.add_record({"hist": frame.hist, "spc": frame.spc},
                              labels=labels_to_text(frame.labels), meta=_frame_meta(frame))
        writer.set_split(**split)

    sbrs = [frame.meta["sbr"] for frame in frames]
    if sbrs:
        logger.info("Wrote %d frames to %s (mean SBR %.4f, %s)", len(sbrs), path,
                    float(np.mean(sbrs)), sbr_category_counts(sbrs))
    else:
        logger.info("Wrote empty dataset to %s", path)
    return Path(path)


def simulate_sequence(path: Union[str, Path], scenes: Sequence[SceneSpec], target_sbr: float,
                      seed: int, signal_scale: float = 2000.0, timing: TimingConfig = TimingConfig(),
                      skew_sigma: float = 0.3, calibration_average: int = 16,
                      config_echo: Optional[Mapping[str, Any]] = None) -> Path:
    """
    Simulate a fixed scene sequence (e.g. from moving_object_sequence)
    under constant illumination and write it as a test-only dataset.

    The illumination is solved once, on the first scene, for ``target_sbr``.
    """
    if not scenes:
        raise ConfigError("scene sequence is empty")
    skew = frame_rng(seed, 0, STREAM_SKEW).normal(0.0, skew_sigma, (GRID_H, GRID_W)) if skew_sigma > 0 else None
    illum = sbr_to_illum(target_sbr, scenes[0], signal_scale, timing, skew)
    frames = []
    for index, scene in enumerate(scenes):
        frame = simulate_frame(scene, illum, timing, frame_rng(seed, index, STREAM_TEST), skew)
        frame.meta.update(seed=seed, frame=index, sbr_target=target_sbr,
                          category=classify_sbr(frame.meta["sbr"]))
        frames.append(frame)
    calib = calibration_frame(timing, IllumSpec(signal_scale, signal_scale * 1e-4), skew=skew,
                              rng=frame_rng(seed, 0, STREAM_CALIBRATION), n_average=calibration_average)
    echo = dict(config_echo or {})
    echo.update({"seed": seed, "n_frames": 0, "n_test": len(frames), "skew_sigma": skew_sigma,
                 "sequence.target_sbr": target_sbr, "illum.signal_scale": signal_scale,
                 "timing.bin_width": timing.bin_width, "timing.pulse_fwhm": timing.pulse_fwhm,
                 "timing.range_offset": timing.range_offset})
    return _write_frames(path, frames, calib, echo, test=list(range(len(frames))))


__all__ = [
    "IllumSpec",
    "ObjectSpec",
    "SceneSpec",
    "RenderedScene",
    "render_scene",
    "signal_photons",
    "expected_histogram",
    "expected_histogram_frame",
    "sample_histogram",
    "sample_spc_frame",
    "compute_sbr",
    "classify_sbr",
    "sbr_category_counts",
    "sbr_to_illum",
    "ObjectArchetype",
    "DEFAULT_ARCHETYPES",
    "SceneGeneratorConfig",
    "SceneGenerator",
    "moving_object_sequence",
    "label_boxes",
    "SimulatedFrame",
    "simulate_frame",
    "default_wall_depth",
    "simulate_wall",
    "calibration_frame",
    "IllumSchedule",
    "frame_rng",
    "simulate_frames",
    "simulate_dataset",
    "simulate_sequence",
]
