"""Bit-exact binary file formats and small text sidecar formats.

Binary layouts (all little-endian, magic + u16 version = 1):

  FGRD  u32 h, u32 w, u32 d, then h*w*d float32, row-major (row, col, chan)
  LMSK  u32 H, u32 W, u16 C, then H*W uint8 labels (255 = IGNORE)
  PMAP  u32 H, u32 W, u16 C, then H*W*C float32
  TPSP  u16 K, f32 reg_weight, then 2*K*K float32 (all du, then all dv,
        row-major control order)

Reading then re-writing any of these reproduces identical bytes.  All
writes are atomic (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, MissingArtifactError
from .tps import TpsParams
from .types import CategorySpec, FeatureGrid, LabelMask, ProbabilityMap, IGNORE

_VERSION = 1
_F32_MAX = float(np.finfo(np.float32).max)


def atomic_write_bytes(path: Path | str, payload: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path | str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _read_file(path: Path | str) -> bytes:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"file not found: {path}")
    return path.read_bytes()


class _Reader:
    def __init__(self, path: Path | str, magic: bytes):
        self.path = Path(path)
        self.data = _read_file(path)
        self.offset = 0
        got = self._take(4)
        if got != magic:
            raise FormatError(f"{self.path}: bad magic {got!r}, expected {magic!r}")
        version = self.u16()
        if version != _VERSION:
            raise FormatError(f"{self.path}: unsupported version {version}")

    def _take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(f"{self.path}: truncated (needed {n} bytes at {self.offset})")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self._take(4))[0]

    def f32_array(self, count: int) -> np.ndarray:
        raw = self._take(4 * count)
        return np.frombuffer(raw, dtype="<f4", count=count).astype(np.float64)

    def u8_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self._take(count), dtype=np.uint8, count=count).copy()

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(
                f"{self.path}: {len(self.data) - self.offset} trailing bytes after payload"
            )


def _f32_payload(values: np.ndarray, what: str) -> bytes:
    out = np.ascontiguousarray(values, dtype="<f4")
    if not np.all(np.isfinite(out)):
        raise FormatError(f"{what}: values exceed float32 range or are non-finite")
    return out.tobytes()


# ---------------------------------------------------------------- FGRD

def write_feature_grid(path: Path | str, grid: FeatureGrid) -> None:
    header = b"FGRD" + struct.pack("<HIII", _VERSION, grid.h, grid.w, grid.d)
    atomic_write_bytes(path, header + _f32_payload(grid.values, "feature grid"))


def read_feature_grid(path: Path | str) -> FeatureGrid:
    r = _Reader(path, b"FGRD")
    h, w, d = r.u32(), r.u32(), r.u32()
    values = r.f32_array(h * w * d).reshape(h, w, d)
    r.finish()
    try:
        return FeatureGrid(values)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- LMSK

def write_label_mask(path: Path | str, mask: LabelMask) -> None:
    header = b"LMSK" + struct.pack("<HIIH", _VERSION, mask.height, mask.width, mask.num_classes)
    atomic_write_bytes(path, header + mask.labels.tobytes())


def read_label_mask(path: Path | str, category: str = "") -> LabelMask:
    r = _Reader(path, b"LMSK")
    h, w, c = r.u32(), r.u32(), r.u16()
    labels = r.u8_array(h * w).reshape(h, w)
    r.finish()
    try:
        return LabelMask(labels, c, category)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- PMAP

def write_probability_map(path: Path | str, pmap: ProbabilityMap) -> None:
    header = b"PMAP" + struct.pack(
        "<HIIH", _VERSION, pmap.height, pmap.width, pmap.num_classes
    )
    atomic_write_bytes(path, header + _f32_payload(pmap.values, "probability map"))


def read_probability_map(path: Path | str) -> ProbabilityMap:
    r = _Reader(path, b"PMAP")
    h, w, c = r.u32(), r.u32(), r.u16()
    values = r.f32_array(h * w * c).reshape(h, w, c)
    r.finish()
    try:
        return ProbabilityMap(values)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- TPSP

def write_tps_params(path: Path | str, params: TpsParams) -> None:
    if params.k > 0xFFFF:
        raise FormatError(f"control grid K={params.k} too large for the file format")
    header = b"TPSP" + struct.pack("<HHf", _VERSION, params.k, params.reg_weight)
    atomic_write_bytes(path, header + _f32_payload(params.to_vector(), "tps displacements"))


def read_tps_params(path: Path | str) -> TpsParams:
    r = _Reader(path, b"TPSP")
    k = r.u16()
    if k < 2:
        raise FormatError(f"{path}: control grid K={k} must be >= 2")
    reg = r.f32()
    vec = r.f32_array(2 * k * k)
    r.finish()
    try:
        return TpsParams.from_vector(k, vec, reg)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ------------------------------------------------------- category specs

def read_category_spec(path: Path | str) -> CategorySpec:
    """Line-oriented spec: first data line is the category name, the rest
    are part names in index order (background first)."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"category spec not found: {path}")
    lines = [
        ln.strip()
        for ln in path.read_text(encoding="utf-8").splitlines()
        if ln.strip() and not ln.strip().startswith("#")
    ]
    if len(lines) < 2:
        raise FormatError(f"{path}: need a category name and at least one part")
    return CategorySpec(lines[0], tuple(lines[1:]))


def write_category_spec(path: Path | str, spec: CategorySpec) -> None:
    atomic_write_text(path, "\n".join([spec.name, *spec.parts]) + "\n")


# ------------------------------------------------------------ label remap

def read_label_remap(path: Path | str) -> dict[int, int]:
    """Tab-separated `src<TAB>dst` label pairs; unlisted labels map to
    themselves and IGNORE is never remapped."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"remap file not found: {path}")
    mapping: dict[int, int] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'src<TAB>dst'")
        try:
            src, dst = int(fields[0]), int(fields[1])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer label: {exc}") from exc
        if not (0 <= src < IGNORE and 0 <= dst < IGNORE):
            raise FormatError(f"{path}:{lineno}: labels must lie in [0, 254]")
        if src in mapping:
            raise FormatError(f"{path}:{lineno}: duplicate source label {src}")
        mapping[src] = dst
    return mapping


def apply_label_remap(mask: LabelMask, mapping: dict[int, int], num_classes: int) -> LabelMask:
    table = np.arange(256, dtype=np.uint8)
    for src, dst in mapping.items():
        table[src] = dst
    return LabelMask(table[mask.labels], num_classes, mask.category)


# -------------------------------------------------------- search results

def write_search_result(
    path: Path | str,
    winner_id: str,
    phi: float,
    iterations: int,
    converged: bool,
    ranking: list[tuple[str, float]] | tuple[tuple[str, float], ...],
) -> None:
    lines = [
        "# geomatch search result",
        f"winner\t{winner_id}\t{phi:.17g}\t{iterations}\t{int(converged)}",
    ]
    for rank, (entry_id, entry_phi) in enumerate(ranking, start=1):
        lines.append(f"rank\t{rank}\t{entry_id}\t{entry_phi:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_search_result(path: Path | str) -> tuple[str, float, int, bool, list[tuple[str, float]]]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"search result not found: {path}")
    winner = None
    ranking: list[tuple[str, float]] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "winner" and len(fields) == 5:
            winner = (fields[1], float(fields[2]), int(fields[3]), bool(int(fields[4])))
        elif fields[0] == "rank" and len(fields) == 4:
            ranking.append((fields[2], float(fields[3])))
        else:
            raise FormatError(f"{path}:{lineno}: unrecognized record {fields[0]!r}")
    if winner is None:
        raise FormatError(f"{path}: missing winner record")
    return winner[0], winner[1], winner[2], winner[3], ranking


# -------------------------------------------------------- key=value files

def write_keyvalues(path: Path | str, pairs: dict[str, object]) -> None:
    lines = [f"{key}={_format_value(value)}" for key, value in pairs.items()]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _format_value(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def read_keyvalues(path: Path | str) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


# --------------------------------------------------- confidence sidecars

def write_confidence_map(path: Path | str, scores: np.ndarray, valid: np.ndarray) -> None:
    """Confidence maps ride in FGRD files: channel 0 scores, channel 1 validity."""
    stacked = np.stack([scores, valid.astype(np.float64)], axis=2)
    write_feature_grid(path, FeatureGrid(stacked))


def read_confidence_map(path: Path | str) -> tuple[np.ndarray, np.ndarray]:
    grid = read_feature_grid(path)
    if grid.d != 2:
        raise FormatError(f"{path}: confidence grid needs d=2, got d={grid.d}")
    scores = grid.values[:, :, 0]
    valid = grid.values[:, :, 1] != 0.0
    if np.any((scores < 0) | (scores > 1)):
        raise FormatError(f"{path}: confidence scores outside [0, 1]")
    return scores, valid
