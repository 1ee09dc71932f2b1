"""Truncated VGG16 feature extractor.

The default keeps the first four convolutional blocks without the
trailing max-pool (stride 8, 512 channels); `include_final_pool` keeps
that pool for stride-16 grids.  Weights come from the torchvision
download ("pretrained"), a deterministic seeded initialization
("seeded", for offline runs and tests), or a local state-dict file.
"""

from __future__ import annotations

from pathlib import Path

import torch
import torchvision

from .errors import WeightLoadError

#: features[:23] ends with the conv4_3 ReLU; features[:24] adds its pool.
_TRUNCATE_NO_POOL = 23
_TRUNCATE_WITH_POOL = 24

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def load_backbone(weights: str = "pretrained", include_final_pool: bool = False) -> torch.nn.Module:
    """Frozen eval-mode VGG16 truncation.

    `weights` is "pretrained", "seeded", or a path to a VGG16 state dict.
    """
    if weights == "pretrained":
        try:
            vgg = torchvision.models.vgg16(
                weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1
            )
        except Exception as exc:
            raise WeightLoadError(f"failed to obtain pretrained weights: {exc}") from exc
    elif weights == "seeded":
        torch.manual_seed(0)
        vgg = torchvision.models.vgg16(weights=None)
    else:
        path = Path(weights)
        if not path.exists():
            raise WeightLoadError(f"weight file not found: {path}")
        vgg = torchvision.models.vgg16(weights=None)
        try:
            state = torch.load(path, map_location="cpu", weights_only=True)
            vgg.load_state_dict(state)
        except Exception as exc:
            raise WeightLoadError(f"cannot load weights from {path}: {exc}") from exc

    cut = _TRUNCATE_WITH_POOL if include_final_pool else _TRUNCATE_NO_POOL
    features = vgg.features[:cut]
    features.eval()
    for p in features.parameters():
        p.requires_grad_(False)
    return features


def backbone_stride(include_final_pool: bool = False) -> int:
    return 16 if include_final_pool else 8
