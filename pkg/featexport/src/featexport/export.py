"""Batch export of CNN feature grids and softmax probability maps."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .backbone import IMAGENET_MEAN, IMAGENET_STD, backbone_stride, load_backbone
from .errors import ExportError

SYNTHETIC_LONG_EDGE = 800
REAL_SHORT_EDGE = 224


@dataclass(frozen=True)
class ExportConfig:
    """Feature export settings.

    `resize_rule` is "synthetic" (long edge 800), "real" (short edge 224),
    or "none"; `weights` as accepted by `load_backbone`.
    """

    resize_rule: str = "real"
    weights: str = "pretrained"
    include_final_pool: bool = False

    def __post_init__(self) -> None:
        if self.resize_rule not in ("synthetic", "real", "none"):
            raise ExportError(f"unknown resize rule '{self.resize_rule}'")


def resized_size(width: int, height: int, rule: str) -> tuple[int, int]:
    """(width, height) after applying a resize rule, aspect preserved."""
    if rule == "none":
        return width, height
    if rule == "synthetic":
        scale = SYNTHETIC_LONG_EDGE / max(width, height)
    elif rule == "real":
        scale = REAL_SHORT_EDGE / min(width, height)
    else:
        raise ExportError(f"unknown resize rule '{rule}'")
    return max(1, round(width * scale)), max(1, round(height * scale))


def _load_image(path: Path) -> Image.Image:
    if not path.exists():
        raise ExportError(f"image not found: {path}")
    if path.stat().st_size == 0:
        raise ExportError(f"empty image file: {path}")
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ExportError(f"cannot decode image {path}: {exc}") from exc


def _to_batch(img: Image.Image) -> torch.Tensor:
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.array(IMAGENET_MEAN, dtype=np.float32)) / np.array(
        IMAGENET_STD, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)


def export_features(
    image_paths: Sequence[Path | str] | Iterable[Path | str],
    out_dir: Path | str,
    config: ExportConfig | None = None,
) -> list[Path]:
    """Write one FGRD per image into `out_dir`; returns the written paths.

    Channel order follows the backbone, spatial order is row-major, and
    inference runs in eval mode with gradients off, so re-running over
    unchanged inputs reproduces identical bytes.
    """
    from .formats import write_feature_grid

    config = config or ExportConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backbone = load_backbone(config.weights, config.include_final_pool)
    stride = backbone_stride(config.include_final_pool)

    written: list[Path] = []
    with torch.no_grad():
        for raw_path in image_paths:
            path = Path(raw_path)
            img = _load_image(path)
            new_w, new_h = resized_size(img.width, img.height, config.resize_rule)
            if new_h // stride < 2 or new_w // stride < 2:
                raise ExportError(
                    f"{path}: resized {new_w}x{new_h} yields a feature grid below 2x2 "
                    f"at stride {stride}"
                )
            if (new_w, new_h) != (img.width, img.height):
                img = img.resize((new_w, new_h), Image.Resampling.BILINEAR)
            out = backbone(_to_batch(img))
            grid = out.squeeze(0).permute(1, 2, 0).contiguous().numpy()
            target = out_dir / f"{path.stem}.fgrd"
            write_feature_grid(target, grid)
            written.append(target)
    return written


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable per-pixel softmax over the last axis, in float64."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def export_probs(
    logit_paths: Sequence[Path | str] | Iterable[Path | str],
    num_classes: int,
    out_dir: Path | str,
) -> list[Path]:
    """Softmax (H, W, C) logit arrays stored as .npy into PMAP files."""
    from .formats import write_probability_map

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for raw_path in logit_paths:
        path = Path(raw_path)
        if not path.exists():
            raise ExportError(f"logit file not found: {path}")
        try:
            logits = np.load(path)
        except ValueError as exc:
            raise ExportError(f"cannot parse {path}: {exc}") from exc
        if logits.ndim != 3:
            raise ExportError(f"{path}: logits must be HxWxC, got shape {logits.shape}")
        if logits.shape[2] != num_classes:
            raise ExportError(
                f"{path}: logit channels {logits.shape[2]} != expected classes {num_classes}"
            )
        if not np.all(np.isfinite(logits)):
            raise ExportError(f"{path}: non-finite logits")
        target = out_dir / f"{path.stem}.pmap"
        write_probability_map(target, softmax(logits))
        written.append(target)
    return written
