"""Prototype/viewpoint source pools and the per-target grid search.

A pool enumerates candidate source samples: one entry per (prototype,
azimuth, elevation) with paths to its feature grid and label mask.
Searching runs the warp optimization for the target against every entry
and returns the full ranking; the entry with the highest matching score
wins, with ties broken by the smallest entry id.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, GeomatchError, MissingArtifactError
from .formats import read_feature_grid, read_label_mask
from .optimize import MatchResult, OptimConfig, optimize_transform
from .types import FeatureGrid, LabelMask

ALLOWED_AZIMUTHS = tuple(range(0, 360, 30))
ALLOWED_ELEVATIONS = (5, 20)
VIEWPOINTS_PER_PROTOTYPE = len(ALLOWED_AZIMUTHS) * len(ALLOWED_ELEVATIONS)


@dataclass(frozen=True)
class PoolEntry:
    entry_id: str
    prototype: str
    azimuth: int
    elevation: int
    features_path: Path
    labels_path: Path

    def load_features(self) -> FeatureGrid:
        try:
            return read_feature_grid(self.features_path)
        except GeomatchError as exc:
            raise type(exc)(f"pool entry '{self.entry_id}': {exc}") from exc

    def load_labels(self) -> LabelMask:
        try:
            return read_label_mask(self.labels_path)
        except GeomatchError as exc:
            raise type(exc)(f"pool entry '{self.entry_id}': {exc}") from exc


@dataclass(frozen=True)
class Pool:
    """Immutable candidate set; `partial` warns that some prototype has
    fewer than the full set of viewpoints."""

    entries: tuple[PoolEntry, ...]
    partial: bool

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, entry_id: str) -> PoolEntry:
        for e in self.entries:
            if e.entry_id == entry_id:
                return e
        raise MissingArtifactError(f"no pool entry with id '{entry_id}'")


@dataclass(frozen=True)
class SearchResult:
    winner_id: str
    winner: MatchResult
    ranking: tuple[tuple[str, float], ...]


def parse_pool_manifest(path: Path | str) -> list[PoolEntry]:
    """Parse the tab-separated manifest; paths resolve relative to it.

    Line format: entry_id, prototype, azimuth, elevation, features_path,
    labels_path.  '#' starts a comment, blank lines are skipped.
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"pool manifest not found: {path}")
    base = path.parent
    entries: list[PoolEntry] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise FormatError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(fields)}")
        entry_id, prototype, az_s, el_s, feat_s, lab_s = fields
        try:
            azimuth = int(az_s)
            elevation = int(el_s)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad viewpoint numbers: {exc}") from exc
        if azimuth not in ALLOWED_AZIMUTHS:
            raise FormatError(
                f"{path}:{lineno}: azimuth {azimuth} not in {sorted(ALLOWED_AZIMUTHS)}"
            )
        if elevation not in ALLOWED_ELEVATIONS:
            raise FormatError(
                f"{path}:{lineno}: elevation {elevation} not in {sorted(ALLOWED_ELEVATIONS)}"
            )
        entries.append(
            PoolEntry(entry_id, prototype, azimuth, elevation, base / feat_s, base / lab_s)
        )
    return entries


def build_pool(manifest: Path | str) -> Pool:
    """Load and validate a manifest into an immutable pool."""
    entries = parse_pool_manifest(manifest)
    if not entries:
        raise FormatError(f"pool manifest {manifest} lists no entries")

    seen_ids: set[str] = set()
    seen_views: set[tuple[str, int, int]] = set()
    per_prototype: dict[str, int] = {}
    for e in entries:
        if e.entry_id in seen_ids:
            raise FormatError(f"duplicate entry id '{e.entry_id}'")
        seen_ids.add(e.entry_id)
        view = (e.prototype, e.azimuth, e.elevation)
        if view in seen_views:
            raise FormatError(
                f"duplicate viewpoint (prototype={e.prototype}, azimuth={e.azimuth}, "
                f"elevation={e.elevation}) at entry '{e.entry_id}'"
            )
        seen_views.add(view)
        per_prototype[e.prototype] = per_prototype.get(e.prototype, 0) + 1
        for p in (e.features_path, e.labels_path):
            if not p.exists():
                raise MissingArtifactError(f"entry '{e.entry_id}': file not found: {p}")
    partial = any(n < VIEWPOINTS_PER_PROTOTYPE for n in per_prototype.values())
    return Pool(tuple(entries), partial)


def _search(
    target: FeatureGrid,
    entries: tuple[PoolEntry, ...],
    config: OptimConfig,
    jobs: int,
) -> SearchResult:
    def run(entry: PoolEntry) -> MatchResult:
        feats = entry.load_features()
        try:
            return optimize_transform(feats, target, config)
        except GeomatchError as exc:
            raise type(exc)(f"pool entry '{entry.entry_id}': {exc}") from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, entries))
    else:
        results = [run(e) for e in entries]

    order = sorted(range(len(entries)), key=lambda i: (-results[i].phi, entries[i].entry_id))
    ranking = tuple((entries[i].entry_id, results[i].phi) for i in order)
    best = order[0]
    return SearchResult(entries[best].entry_id, results[best], ranking)


def select_best_source(
    target: FeatureGrid,
    pool: Pool,
    config: OptimConfig | None = None,
    jobs: int = 1,
) -> SearchResult:
    """Optimize target against every pool entry; argmax of the score wins."""
    if not pool.entries:
        raise FormatError("empty pool")
    return _search(target, pool.entries, config or OptimConfig(), max(1, jobs))


def nearest_viewpoint_bin(azimuth: float, elevation: float) -> tuple[int, int]:
    """Snap a continuous viewpoint to the pool's discrete bins.

    Azimuth uses circular distance over the 30-degree bins; elevation
    picks the closer of the two allowed rings.  Ties go to the smaller
    angle.
    """
    a = float(azimuth) % 360.0
    best_az = min(ALLOWED_AZIMUTHS, key=lambda b: (min((a - b) % 360.0, (b - a) % 360.0), b))
    best_el = min(ALLOWED_ELEVATIONS, key=lambda b: (abs(float(elevation) - b), b))
    return best_az, best_el


def select_best_source_with_viewpoint(
    target: FeatureGrid,
    pool: Pool,
    azimuth: float,
    elevation: float,
    config: OptimConfig | None = None,
    jobs: int = 1,
) -> SearchResult:
    """Search restricted to entries in the nearest viewpoint bin."""
    if not pool.entries:
        raise FormatError("empty pool")
    bin_az, bin_el = nearest_viewpoint_bin(azimuth, elevation)
    subset = tuple(
        e for e in pool.entries if e.azimuth == bin_az and e.elevation == bin_el
    )
    if not subset:
        raise MissingArtifactError(
            f"no pool entry in viewpoint bin (azimuth={bin_az}, elevation={bin_el})"
        )
    return _search(target, subset, config or OptimConfig(), max(1, jobs))
