"""Confidence-thresholded pseudo-labels and the associated losses.

Pipeline: warp each target pixel back into the winning source sample,
read the source label there, and score it with the probability the
target-domain segmenter assigns that class at the pixel.  Scores from
all images of a category are pooled; the threshold is the nearest-rank
percentile of that pool, and only pixels scoring strictly above it keep
their warped label.  Everything else becomes IGNORE.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import math

import numpy as np

from .errors import DimensionError, FormatError, NumericalError
from .sampler import sample_labels_batch
from .tps import TpsSolved, transform_points
from .types import IGNORE, LabelMask, ProbabilityMap, norm_coord_grid

DEFAULT_PERCENTILE = 60.0
PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class ConfidenceMap:
    """Per-pixel confidence in the warped label; invalid pixels hold 0."""

    scores: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if scores.shape != valid.shape or scores.ndim != 2:
            raise DimensionError(
                f"confidence shapes inconsistent: {scores.shape} vs {valid.shape}"
            )
        if np.any(scores[~valid] != 0.0):
            raise FormatError("invalid confidence positions must hold exactly 0")
        if scores.min(initial=0.0) < 0.0 or scores.max(initial=0.0) > 1.0:
            raise FormatError("confidence scores outside [0, 1]")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "valid", valid)

    @property
    def valid_scores(self) -> np.ndarray:
        return self.scores[self.valid]


@dataclass(frozen=True)
class Threshold:
    """Nearest-rank percentile of a pooled score multiset."""

    gamma: float
    percentile: float
    sample_count: int


@dataclass(frozen=True)
class PseudoLabel:
    mask: LabelMask
    coverage: float


def warp_labels(source_label: LabelMask, theta: TpsSolved, height: int, width: int) -> np.ndarray:
    """(height, width) array of source labels pulled through the warp; IGNORE off frame."""
    pts = norm_coord_grid(height, width)
    warped = transform_points(theta, pts)
    return sample_labels_batch(source_label, warped).reshape(height, width)


def confidence_scores(
    source_label: LabelMask, theta: TpsSolved, target_probs: ProbabilityMap
) -> ConfidenceMap:
    """Score each target pixel's warped label with the segmenter's probability."""
    if source_label.num_classes != target_probs.num_classes:
        raise DimensionError(
            f"category mismatch: source mask has {source_label.num_classes} classes, "
            f"probability map has {target_probs.num_classes}"
        )
    h, w = target_probs.height, target_probs.width
    labels = warp_labels(source_label, theta, h, w)
    valid = labels != IGNORE
    scores = np.zeros((h, w))
    kk, ll = np.nonzero(valid)
    scores[kk, ll] = target_probs.values[kk, ll, labels[kk, ll]]
    return ConfidenceMap(scores, valid)


def percentile_threshold(
    score_sets: Sequence[ConfidenceMap] | Iterable[ConfidenceMap], p: float = DEFAULT_PERCENTILE
) -> Threshold:
    """Nearest-rank percentile over the pooled valid scores of all maps.

    gamma is the ceil(p/100 * n)-th smallest of the n pooled scores, so it
    is always an observed score.
    """
    if not (0.0 < p < 100.0):
        raise FormatError(f"percentile must lie strictly between 0 and 100, got {p}")
    pools = [cm.valid_scores for cm in score_sets]
    if not pools:
        raise NumericalError("no confidence maps given")
    pooled = np.concatenate(pools)
    n = len(pooled)
    if n == 0:
        raise NumericalError("pooled confidence score set is empty (no valid pixels)")
    rank = math.ceil(p / 100.0 * n)
    gamma = float(np.sort(pooled, kind="stable")[rank - 1])
    return Threshold(gamma, p, n)


def threshold_warped_labels(
    warped: np.ndarray, confidences: ConfidenceMap, gamma: Threshold
) -> PseudoLabel:
    """Keep warped labels scoring strictly above gamma; IGNORE the rest."""
    warped = np.asarray(warped)
    if warped.shape != confidences.scores.shape:
        raise DimensionError(
            f"label/confidence shape mismatch: {warped.shape} vs {confidences.scores.shape}"
        )
    keep = confidences.valid & (confidences.scores > gamma.gamma) & (warped != IGNORE)
    out = np.where(keep, warped, IGNORE).astype(np.uint8)
    coverage = float(np.count_nonzero(out != IGNORE)) / out.size
    return PseudoLabel(out, coverage)


def make_pseudolabel(
    source_label: LabelMask,
    theta: TpsSolved,
    confidences: ConfidenceMap,
    gamma: Threshold,
) -> tuple[LabelMask, float]:
    """Emit the final pseudo-label mask and its coverage."""
    h, w = confidences.scores.shape
    warped = warp_labels(source_label, theta, h, w)
    result = threshold_warped_labels(warped, confidences, gamma)
    mask = LabelMask(result.mask, source_label.num_classes, source_label.category)
    return mask, result.coverage


@dataclass(frozen=True)
class CrossEntropyStats:
    total: float
    pixel_count: int
    mean: float


def cross_entropy_report(probs: ProbabilityMap, label: LabelMask) -> CrossEntropyStats:
    """Summed negative log-likelihood over non-IGNORE pixels, plus diagnostics.

    Probabilities are floored at PROBABILITY_FLOOR before the log so
    degenerate maps cannot produce infinities.
    """
    if (probs.height, probs.width) != (label.height, label.width):
        raise DimensionError(
            f"shape mismatch: probs {probs.height}x{probs.width} vs "
            f"label {label.height}x{label.width}"
        )
    if probs.num_classes != label.num_classes:
        raise DimensionError(
            f"category mismatch: probs C={probs.num_classes}, label C={label.num_classes}"
        )
    scored = label.labels != IGNORE
    ii, jj = np.nonzero(scored)
    if len(ii) == 0:
        return CrossEntropyStats(0.0, 0, 0.0)
    picked = probs.values[ii, jj, label.labels[ii, jj]]
    total = float(-np.sum(np.log(np.maximum(picked, PROBABILITY_FLOOR))))
    return CrossEntropyStats(total, len(ii), total / len(ii))


def cross_entropy(probs: ProbabilityMap, label: LabelMask) -> float:
    return cross_entropy_report(probs, label).total


def joint_loss(
    source_losses: Sequence[float], target_losses: Sequence[float], lam: float
) -> float:
    """Sum of source losses plus lam times the sum of target losses."""
    if not (np.isfinite(lam) and lam >= 0.0):
        raise FormatError(f"loss balance weight must be >= 0, got {lam}")
    return float(sum(source_losses) + lam * sum(target_losses))
