"""
Detection evaluation

Scores detector output against ground truth labels. The per-class score is
the share of ground-truth objects matched by a prediction of the right class
with IoU >= 0.5 (a recall-style measure, not the PASCAL precision/recall
area). Tracking reports count, frame by frame, whether a target class was
detected once, several times or not at all.

Prediction files hold one detection per line, with the box normalized like
labels:

    <class_id> <confidence> <x_center> <y_center> <width> <height>
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import (DatasetIOError, EmptyInputError, LabelFormatError, MalformedLineError,
                         OutOfRangeError)
from .labels import (ClassMap, LabelRecord, denormalize, label_files, read_label_file,
                     read_label_text)
from .raster import PathLike, image_size, list_images

logger = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.5
# scales confidence into a tie-breaker below any IoU difference that matters
CONFIDENCE_WEIGHT = 1e-9


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixel coordinates"""
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @classmethod
    def from_label(cls, record: LabelRecord, width: int, height: int) -> "Box":
        return cls(*denormalize(record, width, height))


class GroundTruth(NamedTuple):
    class_id: int
    box: Box


@dataclass(frozen=True)
class Detection:
    """A predicted box with its class and confidence"""
    class_id: int
    box: Box
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be within [0, 1], got {self.confidence}")


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area; 0 for disjoint boxes"""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


# Matching

class TruthOutcome(Enum):
    CORRECT = "correct"
    WRONG = "wrong"
    MISSED = "missed"


@dataclass
class MatchResult:
    """
    Outcome of matching one image's predictions to its ground truth

    Attributes:
        truth_classes: Class of each ground-truth object
        truth_outcomes: Outcome of each ground-truth object
        pred_matched: Whether each prediction was matched
        matches: (prediction index, truth index, IoU) of every accepted pair
    """
    truth_classes: List[int] = field(default_factory=list)
    truth_outcomes: List[TruthOutcome] = field(default_factory=list)
    pred_matched: List[bool] = field(default_factory=list)
    matches: List[Tuple[int, int, float]] = field(default_factory=list)

    def outcomes(self) -> List[Tuple[int, TruthOutcome]]:
        return list(zip(self.truth_classes, self.truth_outcomes))


def match_detections(preds: Sequence[Detection], truths: Sequence[Tuple[int, Box]],
                     iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> MatchResult:
    """
    Match predictions to ground truth one-to-one

    Same-class pairs with IoU >= iou_threshold are eligible. The assignment
    maximizes the number of matched pairs, then their summed IoU, then the
    summed confidence of the matched predictions. Matched truths are
    correct. An unmatched truth overlapped at the threshold by an unmatched
    prediction of another class is wrong; any other unmatched truth is
    missed.
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError(f"iou_threshold must be within (0, 1], got {iou_threshold}")
    truths = [GroundTruth(*t) for t in truths]
    result = MatchResult(truth_classes=[t.class_id for t in truths],
                         truth_outcomes=[TruthOutcome.MISSED] * len(truths),
                         pred_matched=[False] * len(preds))

    overlaps = np.zeros((len(preds), len(truths)))
    for pi, pred in enumerate(preds):
        for ti, truth in enumerate(truths):
            overlaps[pi, ti] = iou(pred.box, truth.box)
    same_class = np.array([[p.class_id == t.class_id for t in truths] for p in preds],
                          dtype=bool).reshape(overlaps.shape)
    eligible = same_class & (overlaps >= iou_threshold)

    if eligible.any():
        # pair count first, then IoU, then confidence
        pair_weight = min(overlaps.shape) + 1
        confidence = np.array([p.confidence for p in preds])[:, None]
        weights = np.where(eligible, pair_weight + overlaps + CONFIDENCE_WEIGHT * confidence, 0.0)
        for pi, ti in zip(*linear_sum_assignment(weights, maximize=True)):
            if not eligible[pi, ti]:
                continue
            result.pred_matched[pi] = True
            result.truth_outcomes[ti] = TruthOutcome.CORRECT
            result.matches.append((int(pi), int(ti), float(overlaps[pi, ti])))

    for ti in range(len(truths)):
        if result.truth_outcomes[ti] is TruthOutcome.CORRECT:
            continue
        if any(not result.pred_matched[pi] and not same_class[pi, ti]
               and overlaps[pi, ti] >= iou_threshold for pi in range(len(preds))):
            result.truth_outcomes[ti] = TruthOutcome.WRONG
    return result


# Scores

@dataclass
class ClassStats:
    """Ground-truth outcome counts of one class"""
    total: int = 0
    correct: int = 0
    wrong: int = 0
    missed: int = 0

    @property
    def map(self) -> Optional[float]:
        return self.correct / self.total if self.total else None


@dataclass
class EvalReport:
    """Per-class outcome counts and scores"""
    classes: Dict[int, ClassStats] = field(default_factory=dict)
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    images: int = 0

    @property
    def overall_map(self) -> Optional[float]:
        """Occurrence-weighted average over all classes"""
        return group_map(self, self.classes.keys())


def group_map(report: EvalReport, class_ids: Iterable[int]) -> Optional[float]:
    """Occurrence-weighted score over a group of classes, None if the group never occurs"""
    stats = [report.classes[c] for c in set(class_ids) if c in report.classes]
    total = sum(s.total for s in stats)
    if total == 0:
        return None
    return sum(s.correct for s in stats) / total


def map_per_class(outcomes: Iterable[Tuple[int, TruthOutcome]],
                  totals: Optional[Mapping[int, int]] = None,
                  iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> EvalReport:
    """
    Score per class as correct / total ground-truth occurrences

    Args:
        outcomes: (class_id, outcome) of ground-truth objects
        totals: Ground-truth occurrences per class. Occurrences without an
            outcome count as missed. Defaults to the outcome counts.

    Returns:
        A report without the classes that never occur
    """
    counted: Dict[int, ClassStats] = {}
    for class_id, outcome in outcomes:
        stats = counted.setdefault(class_id, ClassStats())
        setattr(stats, outcome.value, getattr(stats, outcome.value) + 1)
        stats.total += 1

    if totals is not None:
        for class_id, total in totals.items():
            stats = counted.setdefault(class_id, ClassStats())
            if total < stats.total:
                raise ValueError(f"class {class_id}: {stats.total} outcomes but only {total} occurrences")
            stats.missed += total - stats.total
            stats.total = total

    classes = {c: s for c, s in sorted(counted.items()) if s.total > 0}
    return EvalReport(classes=classes, iou_threshold=iou_threshold)


def evaluate(results: Iterable[MatchResult], iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> EvalReport:
    """Aggregate per-image match results into one report"""
    results = list(results)
    report = map_per_class((o for r in results for o in r.outcomes()), iou_threshold=iou_threshold)
    report.images = len(results)
    return report


# Prediction files

def parse_predictions(text: str, width: int = 1, height: int = 1) -> List[Detection]:
    """
    Parse prediction text into detections with pixel boxes

    Raises:
        MalformedLineError: On a wrong field count or a non-numeric field
        OutOfRangeError: On a confidence outside [0, 1] or a non-positive size
    """
    detections = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 6:
            raise MalformedLineError(f"expected 6 fields, got {len(fields)}", line_no)
        try:
            class_id = int(fields[0])
            confidence, xc, yc, w, h = (float(v) for v in fields[1:])
        except ValueError:
            raise MalformedLineError(f"non-numeric field in {line.strip()!r}", line_no)
        if not all(math.isfinite(v) for v in (confidence, xc, yc, w, h)):
            raise MalformedLineError(f"non-finite field in {line.strip()!r}", line_no)
        if class_id < 0 or not 0 <= confidence <= 1 or w <= 0 or h <= 0:
            raise OutOfRangeError(f"invalid detection {line.strip()!r}", line_no)
        box = Box((xc - w / 2) * width, (yc - h / 2) * height,
                  (xc + w / 2) * width, (yc + h / 2) * height)
        detections.append(Detection(class_id, box, confidence))
    return detections


def read_predictions(path: PathLike, width: int = 1, height: int = 1) -> List[Detection]:
    path = Path(path)
    text = read_label_text(path, "predictions")
    try:
        return parse_predictions(text, width, height)
    except LabelFormatError as e:
        e.path = str(path)
        raise


def read_prediction_sequence(pred_dir: PathLike) -> List[List[Detection]]:
    """Per-frame detections of a directory of prediction files, in file name order"""
    return [read_predictions(path) for path in label_files(pred_dir)]


def evaluate_dataset(truth_dir: PathLike, pred_dir: PathLike,
                     iou_threshold: float = DEFAULT_IOU_THRESHOLD,
                     image_size_override: Optional[Tuple[int, int]] = None) -> EvalReport:
    """
    Evaluate a prediction directory against a labeled dataset directory

    Boxes are denormalized with each image's size, read from the image next
    to the label file unless a fixed size is given. A label without a
    prediction file counts as an image without detections.

    Raises:
        EmptyInputError: If the dataset has no label files
        DatasetIOError: If an image needed for its size is missing
    """
    truth_files = label_files(truth_dir)
    if not truth_files:
        raise EmptyInputError("no ground-truth label files", str(truth_dir))
    images = {p.stem: p for p in list_images(truth_dir)}
    pred_dir = Path(pred_dir)

    results = []
    for path in truth_files:
        if image_size_override is not None:
            width, height = image_size_override
        elif path.stem in images:
            width, height = image_size(images[path.stem])
        else:
            raise DatasetIOError("no image to take the size from", str(path))
        truths = [(r.class_id, Box.from_label(r, width, height)) for r in read_label_file(path).records]
        pred_path = pred_dir / path.name
        preds = read_predictions(pred_path, width, height) if pred_path.exists() else []
        results.append(match_detections(preds, truths, iou_threshold))
        logger.debug("%s: %d truth(s), %d prediction(s)", path.stem, len(truths), len(preds))

    report = evaluate(results, iou_threshold)
    logger.info("evaluated %d image(s)", report.images)
    return report


# Tracking

@dataclass(frozen=True)
class TrackReport:
    """How often a target class was detected once, several times or not at all"""
    frames_total: int
    single: int
    multiple: int
    none: int

    @property
    def pct_single(self) -> float:
        return 100.0 * self.single / self.frames_total

    @property
    def pct_multiple(self) -> float:
        return 100.0 * self.multiple / self.frames_total

    @property
    def pct_none(self) -> float:
        return 100.0 * self.none / self.frames_total


def tracking_report(per_frame_detections: Sequence[Sequence[Detection]], target_class: int,
                    min_confidence: float = 0.0) -> TrackReport:
    """
    Classify every frame by how many detections of the target class it has

    Detections below min_confidence are ignored.

    Raises:
        EmptyInputError: If there are no frames
    """
    if not per_frame_detections:
        raise EmptyInputError("no frames to track")
    single = multiple = none = 0
    for detections in per_frame_detections:
        n = sum(1 for d in detections if d.class_id == target_class and d.confidence >= min_confidence)
        if n == 0:
            none += 1
        elif n == 1:
            single += 1
        else:
            multiple += 1
    return TrackReport(len(per_frame_detections), single, multiple, none)


def best_detection(detections: Sequence[Detection], target_class: int) -> Optional[Detection]:
    """The most confident detection of the target class, first one on ties"""
    best = None
    for d in detections:
        if d.class_id == target_class and (best is None or d.confidence > best.confidence):
            best = d
    return best


# Rendering

def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}"


def format_report(report: EvalReport, classes: Optional[ClassMap] = None,
                  groups: Optional[Mapping[str, Sequence[int]]] = None) -> str:
    """Human-readable table of an evaluation report"""
    def name(class_id):
        return classes.name_of(class_id) if classes else str(class_id)

    lines = [f"{'Class':<24} {'Total':>7} {'Correct':>8} {'Wrong':>7} {'Missed':>7} {'mAP':>6}",
             "-" * 64]
    for class_id, s in report.classes.items():
        lines.append(f"{name(class_id)[:24]:<24} {s.total:>7} {s.correct:>8} {s.wrong:>7} "
                     f"{s.missed:>7} {_fmt(s.map):>6}")
    lines.append("-" * 64)
    for group, ids in (groups or {}).items():
        lines.append(f"{group[:24]:<24} {'':>32} {_fmt(group_map(report, ids)):>6}")
    lines.append(f"{'overall (weighted)':<24} {'':>32} {_fmt(report.overall_map):>6}")
    return "\n".join(lines)


def report_to_dict(report: EvalReport, groups: Optional[Mapping[str, Sequence[int]]] = None) -> dict:
    """Machine-readable form of an evaluation report"""
    return {
        "iou_threshold": report.iou_threshold,
        "images": report.images,
        "classes": {
            str(class_id): {"total": s.total, "correct": s.correct, "wrong": s.wrong,
                            "missed": s.missed, "map": s.map}
            for class_id, s in report.classes.items()
        },
        "groups": {group: group_map(report, ids) for group, ids in (groups or {}).items()},
        "overall_map": report.overall_map,
    }


def track_report_to_dict(report: TrackReport) -> dict:
    return {
        "frames_total": report.frames_total,
        "pct_single": report.pct_single,
        "pct_multiple": report.pct_multiple,
        "pct_none": report.pct_none,
    }
