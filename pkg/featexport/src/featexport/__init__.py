"""Export helper: images to FGRD feature grids, logits to PMAP files.

Runs a truncated VGG16 over batches of images and dumps the resulting
feature grids in the matching pipeline's binary format; also converts
per-pixel segmentation logits into probability maps.  The pipeline and
this helper share nothing but the file formats.
"""

from .backbone import backbone_stride, load_backbone
from .errors import ExportError, WeightLoadError
from .export import ExportConfig, export_features, export_probs, resized_size, softmax

__version__ = "0.1.0"

__all__ = [
    "ExportConfig",
    "ExportError",
    "WeightLoadError",
    "backbone_stride",
    "export_features",
    "export_probs",
    "load_backbone",
    "resized_size",
    "softmax",
]
