"""
Detection-level evaluation of segmentation output.

Segmentation maps become object instances through 8-connected components;
an object counts as detected when a predicted instance of the same class
overlaps it with IoU above the threshold (0.5). Matching is greedy in
descending IoU order within each class.

Accuracy uses frame-level true negatives: a class scores one TN in every
frame where it is neither present nor predicted.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage, stats

from .core import parallel_map
from .datakit import LabelBox
from .errors import EvaluationError, ShapeMismatchError
from .sensor import N_CLASSES

logger = logging.getLogger(__name__)

CLASS_IDS = tuple(range(1, N_CLASSES + 1))
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

A_HIGHER, NO_DIFFERENCE, B_HIGHER = "A higher", "no difference", "B higher"


@dataclass
class InstanceMask:
    """One object instance: a class id and its pixels on the frame grid."""
    class_id: int
    mask: np.ndarray

    @property
    def area(self) -> int:
        return int(self.mask.sum())


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """
    Intersection over union of two boolean pixel sets; 0 when both are empty.

    Example:
        >>> m = np.zeros((4, 4), bool); m[:2, :2] = True
        >>> iou(m, m)
        1.0
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"pixel sets on different grids: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def extract_instances(class_map: np.ndarray, min_area: int = 2,
                      classes: Sequence[int] = CLASS_IDS) -> List[InstanceMask]:
    """
    8-connected components of every object class, smallest class first and
    in scan order within a class. Components under ``min_area`` pixels are
    dropped as speckle.
    """
    class_map = np.asarray(class_map)
    if class_map.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D class map, got {class_map.shape}")
    instances = []
    for class_id in classes:
        labelled, count = ndimage.label(class_map == class_id, structure=_EIGHT_CONNECTED)
        for index in range(1, count + 1):
            mask = labelled == index
            if mask.sum() >= min_area:
                instances.append(InstanceMask(class_id, mask))
    return instances


def instances_from_boxes(labels: Sequence[LabelBox], height: int, width: int) -> List[InstanceMask]:
    """Ground-truth instances: one per label box, covering the box."""
    return [InstanceMask(box.class_id, box.mask(height, width)) for box in labels]


@dataclass(frozen=True)
class Match:
    pred_index: int
    gt_index: int
    iou: float


@dataclass
class ClassOutcome:
    """
    Matching result of one class in one frame. ``gt_detected[i]`` tells
    whether the i-th ground-truth instance of the class was matched.
    """
    n_pred: int
    n_gt: int
    matches: List[Match] = field(default_factory=list)
    gt_detected: Tuple[bool, ...] = ()

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return self.n_pred - self.tp

    @property
    def fn(self) -> int:
        return self.n_gt - self.tp

    @property
    def tn(self) -> int:
        return int(self.n_pred == 0 and self.n_gt == 0)


@dataclass
class DetectionOutcome:
    """Per-class matching results of one frame."""
    per_class: Dict[int, ClassOutcome]

    def __getitem__(self, class_id: int) -> ClassOutcome:
        return self.per_class[class_id]


def _greedy_match(preds: List[np.ndarray], gts: List[np.ndarray], threshold: float) -> List[Match]:
    pairs = []
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            value = iou(p, g)
            if value > threshold:
                pairs.append((-value, i, j))
    pairs.sort()
    used_pred, used_gt, matches = set(), set(), []
    for neg_iou, i, j in pairs:
        if i in used_pred or j in used_gt:
            continue
        used_pred.add(i)
        used_gt.add(j)
        matches.append(Match(i, j, -neg_iou))
    return matches


def match_detections(pred: Sequence[InstanceMask], gt: Sequence[InstanceMask],
                     iou_threshold: float = 0.5, classes: Sequence[int] = CLASS_IDS) -> DetectionOutcome:
    """
    Match predicted to ground-truth instances class by class.

    A pair matches only if IoU > ``iou_threshold``; a prediction on the
    right spot with the wrong class is one FP plus one FN.
    """
    per_class = {}
    for class_id in classes:
        preds = [inst.mask for inst in pred if inst.class_id == class_id]
        gts = [inst.mask for inst in gt if inst.class_id == class_id]
        matches = _greedy_match(preds, gts, iou_threshold)
        detected = {m.gt_index for m in matches}
        per_class[class_id] = ClassOutcome(len(preds), len(gts), matches,
                                           tuple(j in detected for j in range(len(gts))))
    return DetectionOutcome(per_class)


def _gt_instances(gt, shape) -> List[InstanceMask]:
    if isinstance(gt, np.ndarray):
        return extract_instances(gt, min_area=1)
    return instances_from_boxes(gt, *shape)


def evaluate_frames(pred_maps: Sequence[np.ndarray], gt: Sequence[Union[np.ndarray, Sequence[LabelBox]]],
                    iou_threshold: float = 0.5, min_area: int = 2,
                    max_workers: Optional[int] = None) -> List[DetectionOutcome]:
    """
    Outcomes for a sequence of predicted class maps.

    Args:
        pred_maps: (H, W) predicted class maps
        gt: per frame, a ground-truth class map or its label boxes
    """
    if len(pred_maps) != len(gt):
        raise EvaluationError(f"{len(pred_maps)} predictions for {len(gt)} ground-truth frames")

    def evaluate_one(pair):
        pred_map, frame_gt = pair
        pred_map = np.asarray(pred_map)
        return match_detections(extract_instances(pred_map, min_area),
                                _gt_instances(frame_gt, pred_map.shape), iou_threshold)

    return parallel_map(evaluate_one, list(zip(pred_maps, gt)), max_workers=max_workers)


def outcomes_to_entries(outcomes: Sequence[DetectionOutcome]) -> Dict[str, str]:
    """
    Flatten outcomes to ``frame<i>.class<c> = n_pred n_gt bits`` entries,
    where ``bits`` lists gt_detected as 0/1 ('-' without ground truth).
    """
    entries = {}
    for i, outcome in enumerate(outcomes):
        for class_id, part in outcome.per_class.items():
            bits = "".join("1" if hit else "0" for hit in part.gt_detected) or "-"
            entries[f"frame{i:05d}.class{class_id}"] = f"{part.n_pred} {part.n_gt} {bits}"
    return entries


def outcomes_from_entries(entries: Dict[str, str]) -> List[DetectionOutcome]:
    """
    Rebuild outcomes written by outcomes_to_entries. Match IoUs are not
    stored, so restored matches carry NaN IoU and pred_index -1.
    """
    frames: Dict[int, Dict[int, ClassOutcome]] = {}
    try:
        for key, value in entries.items():
            frame_part, class_part = key.split(".")
            n_pred, n_gt, bits = value.split()
            detected = tuple(bit == "1" for bit in bits.strip("-"))
            if len(detected) != int(n_gt):
                raise ValueError(key)
            matches = [Match(-1, j, math.nan) for j, hit in enumerate(detected) if hit]
            frames.setdefault(int(frame_part[len("frame"):]), {})[int(class_part[len("class"):])] = \
                ClassOutcome(int(n_pred), int(n_gt), matches, detected)
    except ValueError as exc:
        raise EvaluationError(f"malformed detection entry {exc}") from None
    if sorted(frames) != list(range(len(frames))):
        raise EvaluationError("detection entries do not cover consecutive frames")
    return [DetectionOutcome(dict(sorted(frames[i].items()))) for i in range(len(frames))]


def _ratio(num: int, den: int, vacuous: bool) -> float:
    if den == 0:
        return 1.0 if vacuous else 0.0
    return num / den


@dataclass(frozen=True)
class ClassMetrics:
    """Counts and derived scores for one class (or all classes pooled)."""
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def _never_seen(self) -> bool:
        return self.tp + self.fp + self.fn == 0

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp, self._never_seen)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn, self._never_seen)

    @property
    def f1(self) -> float:
        """TP / (TP + (FP + FN) / 2)."""
        if self._never_seen:
            return 1.0
        return self.tp / (self.tp + (self.fp + self.fn) / 2.0)

    @property
    def accuracy(self) -> float:
        return _ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn, True)

    def as_dict(self) -> Dict[str, float]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


@dataclass
class MetricsReport:
    per_class: Dict[int, ClassMetrics]
    aggregate: ClassMetrics
    n_frames: int

    def f1_by_class(self) -> Dict[int, float]:
        return {class_id: m.f1 for class_id, m in self.per_class.items()}


def metrics(outcomes: Sequence[DetectionOutcome], classes: Optional[Sequence[int]] = None) -> MetricsReport:
    """
    Accuracy, precision, recall and F1 per class and pooled over classes.

    A class that never occurs and is never predicted scores 1.0 everywhere;
    any other 0/0 scores 0.

    Raises:
        EvaluationError: for an empty outcome set.
    """
    if not outcomes:
        raise EvaluationError("cannot compute metrics of an empty outcome set")
    classes = sorted(outcomes[0].per_class) if classes is None else list(classes)
    per_class = {}
    for class_id in classes:
        parts = [o.per_class[class_id] for o in outcomes]
        per_class[class_id] = ClassMetrics(sum(p.tp for p in parts), sum(p.fp for p in parts),
                                           sum(p.fn for p in parts), sum(p.tn for p in parts))
    pooled = ClassMetrics(*(sum(getattr(m, name) for m in per_class.values()) for name in ("tp", "fp", "fn", "tn")))
    return MetricsReport(per_class, pooled, len(outcomes))


@dataclass(frozen=True)
class PairedRow:
    """Percentages of ground-truth instances by which of A and B detected them."""
    n_instances: int
    both_correct: float
    both_wrong: float
    only_a: float
    only_b: float


def paired_failure_table(outcomes_a: Sequence[DetectionOutcome], outcomes_b: Sequence[DetectionOutcome],
                         classes: Optional[Sequence[int]] = None) -> Dict[int, PairedRow]:
    """
    Compare two predictors instance by instance on the same frames.

    Classes without ground-truth instances get a row of NaN.

    Raises:
        EvaluationError: if the outcomes do not describe the same frames.
    """
    if len(outcomes_a) != len(outcomes_b):
        raise EvaluationError(f"paired outcomes cover {len(outcomes_a)} and {len(outcomes_b)} frames")
    if not outcomes_a:
        raise EvaluationError("cannot pair empty outcome sets")
    classes = sorted(outcomes_a[0].per_class) if classes is None else list(classes)
    table = {}
    for class_id in classes:
        counts = {"both_correct": 0, "both_wrong": 0, "only_a": 0, "only_b": 0}
        for frame, (a, b) in enumerate(zip(outcomes_a, outcomes_b)):
            hits_a, hits_b = a.per_class[class_id].gt_detected, b.per_class[class_id].gt_detected
            if len(hits_a) != len(hits_b):
                raise EvaluationError(
                    f"frame {frame}, class {class_id}: {len(hits_a)} vs {len(hits_b)} ground-truth instances"
                )
            for hit_a, hit_b in zip(hits_a, hits_b):
                key = ("both_correct" if hit_b else "only_a") if hit_a else ("only_b" if hit_b else "both_wrong")
                counts[key] += 1
        n = sum(counts.values())
        if n == 0:
            table[class_id] = PairedRow(0, math.nan, math.nan, math.nan, math.nan)
        else:
            table[class_id] = PairedRow(n, **{key: float(Fraction(100 * value, n)) for key, value in counts.items()})
    return table


@dataclass(frozen=True)
class WelchResult:
    t: float
    dof: float
    p_value: float
    significant: bool
    direction: str


def welch_ttest(samples_a: Sequence[float], samples_b: Sequence[float], alpha: float = 0.05) -> WelchResult:
    """
    Two-sided Welch t-test of mean(A) against mean(B).

    When both samples have zero variance the test degenerates: equal means
    give t = 0 and p = 1, different means t = +-inf and p = 0.

    Raises:
        EvaluationError: for fewer than two samples or non-finite values.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise EvaluationError(f"Welch test needs at least 2 samples per group, got {a.size} and {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise EvaluationError("Welch test samples must be finite")
    if a.var() == 0 and b.var() == 0:
        dof = float(a.size + b.size - 2)
        diff = a.mean() - b.mean()
        if diff == 0:
            t, p = 0.0, 1.0
        else:
            t, p = math.copysign(math.inf, diff), 0.0
    else:
        result = stats.ttest_ind(a, b, equal_var=False)
        t, dof, p = float(result.statistic), float(result.df), float(result.pvalue)
    significant = p < alpha
    if not significant:
        direction = NO_DIFFERENCE
    else:
        direction = A_HIGHER if t > 0 else B_HIGHER
    return WelchResult(t, dof, p, significant, direction)


__all__ = [
    "CLASS_IDS",
    "InstanceMask",
    "iou",
    "extract_instances",
    "instances_from_boxes",
    "Match",
    "ClassOutcome",
    "DetectionOutcome",
    "match_detections",
    "evaluate_frames",
    "outcomes_to_entries",
    "outcomes_from_entries",
    "ClassMetrics",
    "MetricsReport",
    "metrics",
    "PairedRow",
    "paired_failure_table",
    "WelchResult",
    "welch_ttest",
]
