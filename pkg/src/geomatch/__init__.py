"""Cross-domain geometric matching and pseudo-label generation toolkit.

The library turns a pool of rendered source samples plus unlabeled target
images into confidence-filtered pseudo-label masks: feature grids are
aligned by optimizing a thin-plate-spline warp against a cosine
similarity score, the winning sample's labels are warped across, scored
with a segmenter's class probabilities, and thresholded at a per-category
percentile.  Evaluation utilities (per-part IoU, mIoU, pseudo-label
quality) and bit-exact file formats round out the batch pipeline.
"""

from .errors import (
    DimensionError,
    FormatError,
    GeomatchError,
    MissingArtifactError,
    NumericalError,
    UsageError,
)
from .features import DescriptorConfig, extract_descriptors, validate_feature_grid
from .matching import (
    SimilarityMap,
    cosine_similarity,
    matching_score,
    matching_score_gradient,
)
from .metrics import IoUAccumulator, IoUReport, accumulate_iou, pseudolabel_quality
from .optimize import MatchResult, OptimConfig, finite_diff_gradient, optimize_transform
from .pool import (
    Pool,
    PoolEntry,
    SearchResult,
    build_pool,
    select_best_source,
    select_best_source_with_viewpoint,
)
from .pseudolabel import (
    ConfidenceMap,
    Threshold,
    confidence_scores,
    cross_entropy,
    joint_loss,
    make_pseudolabel,
    percentile_threshold,
)
from .sampler import SampleResult, sample_features, sample_label
from .tps import TpsParams, TpsSolved, solve, tps_jacobian_wrt_params, tps_map
from .types import (
    IGNORE,
    CategorySpec,
    FeatureGrid,
    LabelMask,
    NormCoord,
    ProbabilityMap,
    norm_to_pixel,
    pixel_to_norm,
)

__version__ = "0.1.0"

__all__ = [
    "IGNORE",
    "CategorySpec",
    "ConfidenceMap",
    "DescriptorConfig",
    "DimensionError",
    "FeatureGrid",
    "FormatError",
    "GeomatchError",
    "IoUAccumulator",
    "IoUReport",
    "LabelMask",
    "MatchResult",
    "MissingArtifactError",
    "NormCoord",
    "NumericalError",
    "OptimConfig",
    "Pool",
    "PoolEntry",
    "ProbabilityMap",
    "SampleResult",
    "SearchResult",
    "SimilarityMap",
    "Threshold",
    "TpsParams",
    "TpsSolved",
    "UsageError",
    "accumulate_iou",
    "build_pool",
    "confidence_scores",
    "cosine_similarity",
    "cross_entropy",
    "extract_descriptors",
    "finite_diff_gradient",
    "joint_loss",
    "make_pseudolabel",
    "matching_score",
    "matching_score_gradient",
    "norm_to_pixel",
    "optimize_transform",
    "percentile_threshold",
    "pixel_to_norm",
    "pseudolabel_quality",
    "sample_features",
    "sample_label",
    "select_best_source",
    "select_best_source_with_viewpoint",
    "solve",
    "tps_jacobian_wrt_params",
    "tps_map",
    "validate_feature_grid",
]
