"""
Training-target generation.

Building footprints are rasterized onto the image lattice, converted to a
truncated signed-distance field (positive inside buildings) and binned into
11 classes 0..10 where class > 5 means building interior. Images and labels
are then cut into non-overlapping 256x256 patches with a seeded 80/20
train/validation split.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import shapely
from scipy import ndimage
from shapely.geometry import MultiPolygon, Polygon, mapping
from shapely.validation import explain_validity

from calibration import CalibrationMode, calibrate
from coregister import DEFAULT_SEARCH_WINDOW, DegenerateCorrelationError, Shift, coregister_pair
from raster_core import DEFAULT_NODATA, GeoTransform, RasterGrid, write_raster

logger = logging.getLogger(__name__)

DEFAULT_BETA = 10.0
N_CLASSES = 11
NEUTRAL_LABEL = 5
LABEL_NODATA = DEFAULT_NODATA['uint8']
PATCH_SIZE = 256
VALIDATION_FRACTION = 0.2


class LabelError(ValueError):
    pass


class UnclosedRingError(LabelError):
    pass


class InvalidPolygonError(LabelError):
    pass


# ---------------------------------------------------------------------------
# Polygons
# ---------------------------------------------------------------------------

def _check_ring(ring, where: str) -> List[Tuple[float, float]]:
    coords = [(float(pt[0]), float(pt[1])) for pt in ring]
    if len(coords) < 4:
        raise UnclosedRingError(f"{where}: ring needs at least 4 positions, got {len(coords)}")
    if coords[0] != coords[-1]:
        raise UnclosedRingError(f"{where}: first position {coords[0]} != last {coords[-1]}")
    return coords


@dataclass
class PolygonSet:
    """Footprints (or regions) in lon/lat with one source id per polygon."""

    polygons: List[Polygon] = field(default_factory=list)
    ids: List[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.polygons) != len(self.ids):
            raise LabelError(f"{len(self.polygons)} polygons but {len(self.ids)} ids")

    def __len__(self) -> int:
        return len(self.polygons)

    def __iter__(self):
        return iter(zip(self.ids, self.polygons))

    @classmethod
    def from_rings(cls, rings: Sequence, ids: Optional[Sequence[str]] = None) -> 'PolygonSet':
        """Build from [exterior, hole, hole, ...] coordinate lists."""
        polygons = []
        for n, parts in enumerate(rings):
            exterior = _check_ring(parts[0], f"polygon {n} exterior")
            holes = [_check_ring(h, f"polygon {n} hole {k}") for k, h in enumerate(parts[1:])]
            polygons.append(Polygon(exterior, holes))
        ids = [str(i) for i in ids] if ids is not None else [str(n) for n in range(len(polygons))]
        return cls(polygons, ids)

    @classmethod
    def from_geojson(cls, source: Union[str, Path, dict], id_field: str = 'id') -> 'PolygonSet':
        """Parse a FeatureCollection of Polygon/MultiPolygon features.

        MultiPolygon parts keep their feature's id.
        """
        if isinstance(source, dict):
            doc = source
        else:
            try:
                doc = json.loads(Path(source).read_text())
            except json.JSONDecodeError as exc:
                raise LabelError(f"{source}: not valid GeoJSON ({exc})") from exc
        features = doc.get('features') if doc.get('type') == 'FeatureCollection' else [doc]
        polygons, ids = [], []
        for n, feature in enumerate(features or []):
            geom = feature.get('geometry') or {}
            props = feature.get('properties') or {}
            fid = str(props.get(id_field, feature.get('id', n)))
            kind = geom.get('type')
            if kind == 'Polygon':
                parts = [geom['coordinates']]
            elif kind == 'MultiPolygon':
                parts = geom['coordinates']
            else:
                raise LabelError(f"feature {fid}: unsupported geometry type {kind!r}")
            for rings in parts:
                exterior = _check_ring(rings[0], f"feature {fid} exterior")
                holes = [_check_ring(h, f"feature {fid} hole {k}") for k, h in enumerate(rings[1:])]
                polygons.append(Polygon(exterior, holes))
                ids.append(fid)
        return cls(polygons, ids)

    def to_geojson(self, id_field: str = 'id') -> dict:
        return {
            'type': 'FeatureCollection',
            'features': [
                {'type': 'Feature', 'properties': {id_field: pid}, 'geometry': mapping(poly)}
                for pid, poly in self
            ],
        }

    def validate(self) -> 'PolygonSet':
        for pid, poly in self:
            if not poly.is_valid:
                raise InvalidPolygonError(f"polygon {pid}: {explain_validity(poly)}")
        return self

    def by_id(self) -> Dict[str, shapely.Geometry]:
        """One (multi)polygon per id, parts of the same id unioned."""
        grouped: Dict[str, List[Polygon]] = {}
        for pid, poly in self:
            grouped.setdefault(pid, []).append(poly)
        return {pid: parts[0] if len(parts) == 1 else MultiPolygon(parts) for pid, parts in grouped.items()}


# ---------------------------------------------------------------------------
# Rasterization and distance labels
# ---------------------------------------------------------------------------

def _pixel_centers(transform: GeoTransform, rows: slice, cols: slice):
    lons = transform.origin_lon + (np.arange(cols.start, cols.stop) + 0.5) * transform.pixel_width
    lats = transform.origin_lat - (np.arange(rows.start, rows.stop) + 0.5) * transform.pixel_height
    return np.meshgrid(lons, lats)


def geometry_window(geom, transform: GeoTransform, width: int, height: int) -> Optional[Tuple[slice, slice]]:
    """Pixel rows/cols whose centres can fall inside `geom`'s bounding box."""
    min_lon, min_lat, max_lon, max_lat = geom.bounds
    col0 = max(0, math.floor((min_lon - transform.origin_lon) / transform.pixel_width - 0.5))
    col1 = min(width, math.ceil((max_lon - transform.origin_lon) / transform.pixel_width + 0.5))
    row0 = max(0, math.floor((transform.origin_lat - max_lat) / transform.pixel_height - 0.5))
    row1 = min(height, math.ceil((transform.origin_lat - min_lat) / transform.pixel_height + 0.5))
    if row1 <= row0 or col1 <= col0:
        return None
    return slice(row0, row1), slice(col0, col1)


def rasterize(p: PolygonSet, transform: GeoTransform, width: int, height: int) -> RasterGrid:
    """1 where a pixel centre lies strictly inside any polygon (holes excluded)."""
    if width < 1 or height < 1:
        raise LabelError(f"frame must be at least 1x1, got {width}x{height}")
    out = np.zeros((height, width), dtype=np.uint8)
    for _, poly in p:
        window = geometry_window(poly, transform, width, height)
        if window is None:
            continue
        rows, cols = window
        xs, ys = _pixel_centers(transform, rows, cols)
        shapely.prepare(poly)
        inside = shapely.contains_xy(poly, xs, ys)
        out[rows, cols] |= inside.astype(np.uint8)
    return RasterGrid(out, transform, None)


def _binary(mask: RasterGrid) -> np.ndarray:
    return (mask.data[0] != 0) & mask.pixel_valid()


def signed_distance(mask: RasterGrid) -> RasterGrid:
    """Distance from each pixel centre to the nearest centre of the other class.

    Positive inside buildings, negative outside. Masks with a single class
    saturate at +/-(width + height).
    """
    inside = _binary(mask)
    if inside.all() or not inside.any():
        saturation = float(mask.width + mask.height)
        d = np.full(inside.shape, saturation if inside.all() else -saturation, dtype=np.float64)
    else:
        d = np.where(inside, ndimage.distance_transform_edt(inside),
                     -ndimage.distance_transform_edt(~inside))
    return RasterGrid(d.astype(np.float32), mask.transform, None)


def truncate_and_bin(d: RasterGrid, beta: float = DEFAULT_BETA) -> RasterGrid:
    """Clamp to [-beta, beta] and bin into classes 0..10 (5 = zero distance)."""
    if not beta > 0:
        raise LabelError(f"beta must be positive, got {beta}")
    width = beta / NEUTRAL_LABEL
    values = d.data[0].astype(np.float64)
    invalid = d.invalid_mask()[0]
    clamped = np.clip(np.where(invalid, 0.0, values), -beta, beta)
    steps = np.ceil(np.abs(clamped) / width)
    labels = (NEUTRAL_LABEL + np.sign(clamped) * steps).astype(np.uint8)
    nodata = None
    if invalid.any():
        nodata = LABEL_NODATA
        labels[invalid] = nodata
    return RasterGrid(labels, d.transform, nodata)


def distance_labels(mask: RasterGrid, beta: float = DEFAULT_BETA) -> RasterGrid:
    return truncate_and_bin(signed_distance(mask), beta)


# ---------------------------------------------------------------------------
# Patches
# ---------------------------------------------------------------------------

@dataclass
class PatchPair:
    patch_id: str
    row: int
    col: int
    image: RasterGrid
    labels: RasterGrid
    split: str


def _window(r: RasterGrid, row: int, col: int, size: int) -> RasterGrid:
    return RasterGrid(r.data[:, row:row + size, col:col + size], r.transform.offset(row, col), r.nodata)


def patch_origins(height: int, width: int, size: int = PATCH_SIZE) -> List[Tuple[int, int]]:
    return [(row, col) for row in range(0, height - size + 1, size)
            for col in range(0, width - size + 1, size)]


def assign_splits(n: int, seed: int) -> List[str]:
    """Exactly round(0.2 n) validation patches, chosen by a seeded md5 ranking."""
    n_val = round(n * VALIDATION_FRACTION)
    ranked = sorted(range(n), key=lambda k: hashlib.md5(f"{seed}:{k}".encode('utf-8')).hexdigest())
    validation = set(ranked[:n_val])
    return ['validation' if k in validation else 'train' for k in range(n)]


def cut_patches(image: RasterGrid, labels: RasterGrid, seed: int, size: int = PATCH_SIZE) -> List[PatchPair]:
    if not image.same_grid(labels):
        raise LabelError("image and labels must share dimensions and transform")
    if image.width < size or image.height < size:
        raise LabelError(f"raster {image.height}x{image.width} smaller than one {size}x{size} patch")
    origins = patch_origins(image.height, image.width, size)
    splits = assign_splits(len(origins), seed)
    pairs = []
    for (row, col), split in zip(origins, splits):
        pairs.append(PatchPair(
            patch_id=f"{row // size:03d}_{col // size:03d}",
            row=row,
            col=col,
            image=_window(image, row, col, size),
            labels=_window(labels, row, col, size),
            split=split,
        ))
    logger.info("Cut %d patches (%d validation)", len(pairs), splits.count('validation'))
    return pairs


def write_patches(pairs: Sequence[PatchPair], out_dir: Union[str, Path]) -> Path:
    """Write <out>/<split>/<id>_image.tif + _labels.tif and <out>/manifest.csv."""
    out_dir = Path(out_dir)
    for pair in pairs:
        write_raster(pair.image, out_dir / pair.split / f"{pair.patch_id}_image.tif")
        write_raster(pair.labels, out_dir / pair.split / f"{pair.patch_id}_labels.tif")
    manifest = out_dir / 'manifest.csv'
    out_dir.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(
        [{'patch_id': p.patch_id, 'row': p.row, 'col': p.col, 'split': p.split} for p in pairs],
        columns=['patch_id', 'row', 'col', 'split'],
    ).to_csv(manifest, index=False)
    return manifest


def prepare_training_pairs(image: RasterGrid, polygons: PolygonSet, seed: int,
                           mode=CalibrationMode.PER_SCOPE,
                           search_window: int = DEFAULT_SEARCH_WINDOW,
                           beta: float = DEFAULT_BETA,
                           size: int = PATCH_SIZE) -> Tuple[List[PatchPair], Dict[str, Shift]]:
    """Footprints + image -> calibrated, coregistered training patches.

    Each patch's mask is aligned to its image patch independently; a patch
    without edges on either side keeps its mask unshifted.
    """
    mask = rasterize(polygons, image.transform, image.width, image.height)
    aligned = mask.data[0].copy()
    shifts: Dict[str, Shift] = {}
    for row, col in patch_origins(image.height, image.width, size):
        patch_id = f"{row // size:03d}_{col // size:03d}"
        try:
            moved, shift = coregister_pair(_window(image, row, col, size), _window(mask, row, col, size),
                                           search_window)
        except DegenerateCorrelationError:
            logger.debug("patch %s: no edges to correlate, keeping mask as rasterized", patch_id)
            shifts[patch_id] = Shift(0, 0, 0.0)
            continue
        block = moved.data[0]
        aligned[row:row + size, col:col + size] = np.where(block == LABEL_NODATA, 0, block)
        shifts[patch_id] = shift

    labels = distance_labels(RasterGrid(aligned, image.transform, None), beta)
    calibrated = calibrate(image, mode, size)
    return cut_patches(calibrated, labels, seed, size), shifts
