"""Per-part IoU, category mIoU, and pseudo-label quality reports.

Counting conventions: pixels whose ground truth is IGNORE are excluded
entirely; prediction IGNORE is remapped to background (class 0) so the
evaluated prediction is total.  Counts are exact integers; division
happens once at finalize.  Parts appearing in neither prediction nor
ground truth across the whole set have undefined IoU and are excluded
from the mean, which by default also skips the background class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .types import IGNORE, LabelMask


@dataclass(frozen=True)
class IoUReport:
    """Finalized evaluation: per-part IoU (None where undefined) and the mean."""

    per_part: tuple[float | None, ...]
    miou: float | None
    intersection: tuple[int, ...]
    union: tuple[int, ...]
    gt_pixels: tuple[int, ...]
    pred_pixels: tuple[int, ...]


class IoUAccumulator:
    """Mergeable per-part intersection/union pixel counts."""

    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise DimensionError(f"need at least one class, got {num_classes}")
        self.num_classes = num_classes
        self.intersection = np.zeros(num_classes, dtype=np.int64)
        self.gt_pixels = np.zeros(num_classes, dtype=np.int64)
        self.pred_pixels = np.zeros(num_classes, dtype=np.int64)

    def add(self, pred: LabelMask, gt: LabelMask) -> "IoUAccumulator":
        if (pred.height, pred.width) != (gt.height, gt.width):
            raise DimensionError(
                f"shape mismatch: pred {pred.height}x{pred.width} vs gt {gt.height}x{gt.width}"
            )
        if pred.num_classes != self.num_classes or gt.num_classes != self.num_classes:
            raise DimensionError(
                f"category mismatch: accumulator C={self.num_classes}, "
                f"pred C={pred.num_classes}, gt C={gt.num_classes}"
            )
        scored = gt.labels != IGNORE
        g = gt.labels[scored].astype(np.int64)
        p = pred.labels[scored].astype(np.int64)
        p[p == IGNORE] = 0
        confusion = np.bincount(
            g * self.num_classes + p, minlength=self.num_classes * self.num_classes
        ).reshape(self.num_classes, self.num_classes)
        self.intersection += np.diag(confusion)
        self.gt_pixels += confusion.sum(axis=1)
        self.pred_pixels += confusion.sum(axis=0)
        return self

    def merge(self, other: "IoUAccumulator") -> "IoUAccumulator":
        if other.num_classes != self.num_classes:
            raise DimensionError("cannot merge accumulators with different class counts")
        self.intersection += other.intersection
        self.gt_pixels += other.gt_pixels
        self.pred_pixels += other.pred_pixels
        return self

    def finalize(self, include_background: bool = False) -> IoUReport:
        union = self.gt_pixels + self.pred_pixels - self.intersection
        per_part: list[float | None] = []
        for c in range(self.num_classes):
            per_part.append(
                float(self.intersection[c]) / float(union[c]) if union[c] > 0 else None
            )
        start = 0 if include_background else 1
        defined = [x for x in per_part[start:] if x is not None]
        miou = sum(defined) / len(defined) if defined else None
        return IoUReport(
            tuple(per_part),
            miou,
            tuple(int(x) for x in self.intersection),
            tuple(int(x) for x in union),
            tuple(int(x) for x in self.gt_pixels),
            tuple(int(x) for x in self.pred_pixels),
        )


def accumulate_iou(pred: LabelMask, gt: LabelMask, accumulator: IoUAccumulator) -> IoUAccumulator:
    """Add one image pair's counts into the accumulator and return it."""
    return accumulator.add(pred, gt)


@dataclass(frozen=True)
class QualityReport:
    """Pseudo-label quality against ground truth.

    accuracy is None when no pixel is covered; per-part precision entries
    are None for parts the pseudo-label never predicts.
    """

    accuracy: float | None
    coverage: float
    per_part_precision: tuple[float | None, ...]
    covered_pixels: int
    correct_pixels: int


def pseudolabel_quality(pseudo: LabelMask, gt: LabelMask) -> QualityReport:
    """Accuracy over covered pixels, coverage, and per-part precision."""
    if (pseudo.height, pseudo.width) != (gt.height, gt.width):
        raise DimensionError(
            f"shape mismatch: pseudo {pseudo.height}x{pseudo.width} vs "
            f"gt {gt.height}x{gt.width}"
        )
    if pseudo.num_classes != gt.num_classes:
        raise DimensionError(
            f"category mismatch: pseudo C={pseudo.num_classes}, gt C={gt.num_classes}"
        )
    covered = pseudo.labels != IGNORE
    coverage = float(np.count_nonzero(covered)) / covered.size
    scored = covered & (gt.labels != IGNORE)
    n_scored = int(np.count_nonzero(scored))
    correct = int(np.count_nonzero(scored & (pseudo.labels == gt.labels)))
    accuracy = correct / n_scored if n_scored else None

    precision: list[float | None] = []
    for c in range(pseudo.num_classes):
        predicted_c = scored & (pseudo.labels == c)
        n_c = int(np.count_nonzero(predicted_c))
        if n_c == 0:
            precision.append(None)
        else:
            precision.append(int(np.count_nonzero(predicted_c & (gt.labels == c))) / n_c)
    return QualityReport(accuracy, coverage, tuple(precision), n_scored, correct)
