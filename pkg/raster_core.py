"""
Georeferenced raster model shared by every pipeline stage.

A RasterGrid is an immutable (bands, height, width) numpy array plus a
GeoTransform in geographic degrees. Rows advance southward. Everything here
uses the equirectangular approximation with a per-row cos(lat) correction;
at 0.2 degree cell scale that error sits far below the 3 m pixel noise.

Two on-disk formats:
    GeoTIFF        striped, uncompressed or deflate, 1-4 bands, EPSG:4326
    raw fallback   <stem>.json header + <stem>.bin little-endian payload,
                   band-sequential, row-major (test fixture format)
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import rasterio
from rasterio.errors import RasterioError
from rasterio.transform import Affine

logger = logging.getLogger(__name__)

# Metres per degree of latitude (and of longitude at the equator).
DEG_TO_M = 111_320.0
GRID_SIZE_DEG = 0.2
TILE_SIZE_DEG = 5

SUPPORTED_DTYPES = ('uint8', 'uint16', 'float32')
# Sentinel used when a stage has to invent nodata for a raster that had none.
DEFAULT_NODATA = {'uint8': 255, 'uint16': 65535, 'float32': -9999.0}

# Index arithmetic tolerance, in pixels. Box edges computed from float
# degrees land a hair off the lattice; this snaps them back.
_PIXEL_EPS = 1e-6

PathLike = Union[str, Path]


class RasterError(ValueError):
    pass


class EmptyIntersectionError(RasterError):
    pass


class RasterFormatError(RasterError):
    pass


class MalformedHeaderError(RasterFormatError):
    pass


class DtypeMismatchError(RasterFormatError):
    pass


class TruncatedPayloadError(RasterFormatError):
    pass


# ---------------------------------------------------------------------------
# Geographic frame
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeoBox:
    """Axis-aligned geographic box in degrees."""

    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        if not (self.max_lon >= self.min_lon and self.max_lat >= self.min_lat):
            raise RasterError(f"inverted box {self}")

    @property
    def width(self) -> float:
        return self.max_lon - self.min_lon

    @property
    def height(self) -> float:
        return self.max_lat - self.min_lat

    def intersects(self, other: 'GeoBox') -> bool:
        return (self.min_lon < other.max_lon and other.min_lon < self.max_lon
                and self.min_lat < other.max_lat and other.min_lat < self.max_lat)

    def intersection(self, other: 'GeoBox') -> Optional['GeoBox']:
        if not self.intersects(other):
            return None
        return GeoBox(max(self.min_lon, other.min_lon), max(self.min_lat, other.min_lat),
                      min(self.max_lon, other.max_lon), min(self.max_lat, other.max_lat))


@dataclass(frozen=True)
class GeoTransform:
    origin_lon: float
    origin_lat: float
    pixel_width: float
    pixel_height: float

    def __post_init__(self):
        if not (self.pixel_width > 0 and self.pixel_height > 0):
            raise RasterError(
                f"pixel size must be positive, got {self.pixel_width} x {self.pixel_height}"
            )

    def pixel_center(self, row: int, col: int) -> Tuple[float, float]:
        """(lon, lat) of the centre of pixel (row, col)."""
        return (self.origin_lon + (col + 0.5) * self.pixel_width,
                self.origin_lat - (row + 0.5) * self.pixel_height)

    def geo_to_pixel(self, lon: float, lat: float) -> Tuple[int, int]:
        """(row, col) of the pixel containing (lon, lat)."""
        col = math.floor((lon - self.origin_lon) / self.pixel_width + _PIXEL_EPS)
        row = math.floor((self.origin_lat - lat) / self.pixel_height + _PIXEL_EPS)
        return row, col

    def offset(self, rows: int, cols: int) -> 'GeoTransform':
        return GeoTransform(self.origin_lon + cols * self.pixel_width,
                            self.origin_lat - rows * self.pixel_height,
                            self.pixel_width, self.pixel_height)

    def aligned_with(self, other: 'GeoTransform') -> bool:
        """Same pixel size, origins within _PIXEL_EPS of a pixel; chained offsets round differently."""
        return (math.isclose(self.pixel_width, other.pixel_width, rel_tol=1e-12)
                and math.isclose(self.pixel_height, other.pixel_height, rel_tol=1e-12)
                and abs(self.origin_lon - other.origin_lon) <= _PIXEL_EPS * self.pixel_width
                and abs(self.origin_lat - other.origin_lat) <= _PIXEL_EPS * self.pixel_height)

    def scaled(self, factor: int) -> 'GeoTransform':
        """Same origin, pixels `factor` times larger (block aggregation)."""
        return GeoTransform(self.origin_lon, self.origin_lat,
                            self.pixel_width * factor, self.pixel_height * factor)

    def to_affine(self) -> Affine:
        return Affine(self.pixel_width, 0.0, self.origin_lon,
                      0.0, -self.pixel_height, self.origin_lat)

    @classmethod
    def from_affine(cls, a: Affine) -> 'GeoTransform':
        if a.b != 0 or a.d != 0:
            raise RasterFormatError("rotated geotransforms are not supported")
        return cls(a.c, a.f, a.a, -a.e)

    def as_list(self) -> List[float]:
        return [self.origin_lon, self.origin_lat, self.pixel_width, self.pixel_height]


@dataclass(frozen=True, order=True)
class GridCell:
    """One 0.2 x 0.2 degree processing cell; j counts rows of cells northward."""

    j: int
    i: int

    @property
    def bbox(self) -> GeoBox:
        # i / 5 is the double nearest to i * 0.2; multiplying by 0.2 is not.
        step = round(1 / GRID_SIZE_DEG)
        return GeoBox(self.i / step, self.j / step, (self.i + 1) / step, (self.j + 1) / step)

    @property
    def cell_id(self) -> str:
        return f"{self.j}_{self.i}"

    @classmethod
    def from_point(cls, lon: float, lat: float) -> 'GridCell':
        step = round(1 / GRID_SIZE_DEG)
        return cls(j=math.floor(round(lat * step, 9)), i=math.floor(round(lon * step, 9)))


@dataclass(frozen=True, order=True)
class TileSpec:
    lat0: int
    lon0: int

    def __post_init__(self):
        if self.lat0 % TILE_SIZE_DEG or self.lon0 % TILE_SIZE_DEG:
            raise RasterError(f"tile origin ({self.lat0}, {self.lon0}) not a multiple of {TILE_SIZE_DEG}")

    @property
    def bbox(self) -> GeoBox:
        return GeoBox(float(self.lon0), float(self.lat0),
                      float(self.lon0 + TILE_SIZE_DEG), float(self.lat0 + TILE_SIZE_DEG))

    @property
    def tile_id(self) -> str:
        ns = 'N' if self.lat0 >= 0 else 'S'
        ew = 'E' if self.lon0 >= 0 else 'W'
        return f"{ns}{abs(self.lat0):02d}{ew}{abs(self.lon0):03d}"

    @classmethod
    def from_point(cls, lon: float, lat: float) -> 'TileSpec':
        return cls(lat0=math.floor(lat / TILE_SIZE_DEG) * TILE_SIZE_DEG,
                   lon0=math.floor(lon / TILE_SIZE_DEG) * TILE_SIZE_DEG)

    @classmethod
    def for_cell(cls, cell: GridCell) -> 'TileSpec':
        box = cell.bbox
        return cls.from_point((box.min_lon + box.max_lon) / 2, (box.min_lat + box.max_lat) / 2)


# ---------------------------------------------------------------------------
# Raster
# ---------------------------------------------------------------------------

def nodata_mask(values: np.ndarray, nodata) -> np.ndarray:
    """True where `values` equals `nodata` bit for bit (NaN sentinels included)."""
    if nodata is None:
        return np.zeros(values.shape, dtype=bool)
    sentinel = np.asarray(nodata).astype(values.dtype)
    if values.dtype.kind == 'f':
        view = {4: np.uint32, 8: np.uint64}[values.dtype.itemsize]
        return values.view(view) == sentinel.view(view)
    return values == sentinel


class RasterGrid:
    """Immutable georeferenced raster; data shape is (bands, height, width)."""

    __slots__ = ('_data', 'transform', 'nodata')

    def __init__(self, data: np.ndarray, transform: GeoTransform, nodata=None):
        arr = np.asarray(data)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise RasterError(f"expected (bands, height, width) data, got shape {arr.shape}")
        if arr.dtype.name not in SUPPORTED_DTYPES:
            raise DtypeMismatchError(f"unsupported dtype {arr.dtype.name}; use one of {SUPPORTED_DTYPES}")
        arr = np.array(arr, copy=True, order='C')
        arr.setflags(write=False)
        self._data = arr
        self.transform = transform
        if nodata is None:
            self.nodata = None
        else:
            try:
                self.nodata = arr.dtype.type(nodata).item()
            except (OverflowError, ValueError) as exc:
                raise DtypeMismatchError(f"nodata {nodata!r} not representable as {arr.dtype.name}") from exc

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def bands(self) -> int:
        return self._data.shape[0]

    @property
    def height(self) -> int:
        return self._data.shape[1]

    @property
    def width(self) -> int:
        return self._data.shape[2]

    @property
    def dtype(self) -> str:
        return self._data.dtype.name

    @property
    def bounds(self) -> GeoBox:
        t = self.transform
        return GeoBox(t.origin_lon, t.origin_lat - self.height * t.pixel_height,
                      t.origin_lon + self.width * t.pixel_width, t.origin_lat)

    def band(self, index: int = 0) -> np.ndarray:
        return self._data[index]

    def invalid_mask(self) -> np.ndarray:
        """Per-band True where the sample is nodata or non-finite."""
        bad = nodata_mask(self._data, self.nodata)
        if self._data.dtype.kind == 'f':
            bad = bad | ~np.isfinite(self._data)
        return bad

    def valid_mask(self) -> np.ndarray:
        return ~self.invalid_mask()

    def pixel_valid(self) -> np.ndarray:
        """(height, width) True where every band holds a valid sample."""
        return self.valid_mask().all(axis=0)

    def with_data(self, data: np.ndarray, nodata=None) -> 'RasterGrid':
        return RasterGrid(data, self.transform, nodata)

    def same_grid(self, other: 'RasterGrid') -> bool:
        return ((self.width, self.height) == (other.width, other.height)
                and self.transform.aligned_with(other.transform))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RasterGrid):
            return NotImplemented
        return (self.transform.aligned_with(other.transform) and self.dtype == other.dtype
                and _same_nodata(self.nodata, other.nodata)
                and self._data.shape == other._data.shape
                and self._data.tobytes() == other._data.tobytes())

    __hash__ = None

    def __repr__(self) -> str:
        return (f"RasterGrid({self.bands}x{self.height}x{self.width} {self.dtype}, "
                f"nodata={self.nodata}, transform={self.transform})")


def _same_nodata(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def fill_value(r: RasterGrid):
    return r.nodata if r.nodata is not None else DEFAULT_NODATA[r.dtype]


# ---------------------------------------------------------------------------
# Windowing and resampling
# ---------------------------------------------------------------------------

def _window_for(r: RasterGrid, bbox: GeoBox) -> Tuple[int, int, int, int]:
    t = r.transform
    col0 = math.floor((bbox.min_lon - t.origin_lon) / t.pixel_width + _PIXEL_EPS)
    col1 = math.ceil((bbox.max_lon - t.origin_lon) / t.pixel_width - _PIXEL_EPS)
    row0 = math.floor((t.origin_lat - bbox.max_lat) / t.pixel_height + _PIXEL_EPS)
    row1 = math.ceil((t.origin_lat - bbox.min_lat) / t.pixel_height - _PIXEL_EPS)
    return max(row0, 0), min(row1, r.height), max(col0, 0), min(col1, r.width)


def crop_window(r: RasterGrid, bbox: GeoBox) -> RasterGrid:
    """Pixels of `r` touched by `bbox`, on r's own lattice (no resampling)."""
    row0, row1, col0, col1 = _window_for(r, bbox)
    if row1 <= row0 or col1 <= col0:
        raise EmptyIntersectionError(f"box {bbox} does not intersect raster extent {r.bounds}")
    return RasterGrid(r.data[:, row0:row1, col0:col1], r.transform.offset(row0, col0), r.nodata)


def _sample_indices(r: RasterGrid, target: GeoTransform, width: int, height: int):
    """Nearest-neighbour source (rows, cols) for every target pixel centre; -1 = outside."""
    t = r.transform
    lons = target.origin_lon + (np.arange(width) + 0.5) * target.pixel_width
    lats = target.origin_lat - (np.arange(height) + 0.5) * target.pixel_height
    cols = np.floor((lons - t.origin_lon) / t.pixel_width).astype(np.int64)
    rows = np.floor((t.origin_lat - lats) / t.pixel_height).astype(np.int64)
    cols[(cols < 0) | (cols >= r.width)] = -1
    rows[(rows < 0) | (rows >= r.height)] = -1
    return rows, cols


def _resample(r: RasterGrid, target: GeoTransform, width: int, height: int, fill) -> Tuple[np.ndarray, np.ndarray]:
    """(values, covered) of `r` sampled onto the target lattice."""
    rows, cols = _sample_indices(r, target, width, height)
    out = np.full((r.bands, height, width), fill, dtype=r.data.dtype)
    covered = np.zeros((height, width), dtype=bool)
    row_ok = rows >= 0
    col_ok = cols >= 0
    if row_ok.any() and col_ok.any():
        sub = r.data[:, rows[row_ok]][:, :, cols[col_ok]]
        valid = r.valid_mask()[:, rows[row_ok]][:, :, cols[col_ok]].all(axis=0)
        block = np.ix_(np.flatnonzero(row_ok), np.flatnonzero(col_ok))
        out[(slice(None),) + block] = sub
        covered[block] = valid
    return out, covered


def align_to(r: RasterGrid, like: RasterGrid) -> RasterGrid:
    """Nearest-neighbour resample of `r` onto the lattice of `like`."""
    fill = fill_value(r)
    values, covered = _resample(r, like.transform, like.width, like.height, fill)
    values[:, ~covered] = fill
    return RasterGrid(values, like.transform, fill)


def mosaic(rs: Sequence[RasterGrid], target: GeoBox, resolution: float) -> RasterGrid:
    """Composite `rs` onto a `resolution`-degree lattice over `target`.

    Inputs are in priority order (most recent acquisition first): each output
    pixel takes the first input that covers it with valid data.
    """
    if not rs:
        raise RasterError("mosaic needs at least one input raster")
    band_counts = {r.bands for r in rs}
    if len(band_counts) != 1:
        raise RasterError(f"mixed band counts in mosaic inputs: {sorted(band_counts)}")
    dtype = np.result_type(*[r.data.dtype for r in rs])
    if dtype.name not in SUPPORTED_DTYPES:
        raise DtypeMismatchError(f"incompatible input dtypes {[r.dtype for r in rs]}")

    width = max(1, round(target.width / resolution))
    height = max(1, round(target.height / resolution))
    transform = GeoTransform(target.min_lon, target.max_lat, resolution, resolution)
    nodata = next((r.nodata for r in rs if r.nodata is not None), DEFAULT_NODATA[dtype.name])

    out = np.full((rs[0].bands, height, width), nodata, dtype=dtype)
    filled = np.zeros((height, width), dtype=bool)
    for r in rs:
        values, covered = _resample(r, transform, width, height, fill_value(r))
        take = covered & ~filled
        out[:, take] = values[:, take].astype(dtype)
        filled |= take
        if filled.all():
            break
    return RasterGrid(out, transform, nodata)


def split_into_tiles(rs: Iterable[RasterGrid]) -> Dict[TileSpec, RasterGrid]:
    """Group rasters by the 5 degree tile holding their centre and mosaic each group.

    Each tile raster spans the union of its members' extents, clipped to the
    tile, at the members' resolution.
    """
    groups: Dict[TileSpec, List[RasterGrid]] = {}
    for r in rs:
        b = r.bounds
        tile = TileSpec.from_point((b.min_lon + b.max_lon) / 2, (b.min_lat + b.max_lat) / 2)
        groups.setdefault(tile, []).append(r)

    tiles = {}
    for tile in sorted(groups):
        members = groups[tile]
        extent = GeoBox(min(m.bounds.min_lon for m in members), min(m.bounds.min_lat for m in members),
                        max(m.bounds.max_lon for m in members), max(m.bounds.max_lat for m in members))
        extent = extent.intersection(tile.bbox) or extent
        tiles[tile] = mosaic(members, extent, members[0].transform.pixel_width)
    return tiles


# ---------------------------------------------------------------------------
# Pixel areas
# ---------------------------------------------------------------------------

def row_center_lats(r: RasterGrid) -> np.ndarray:
    t = r.transform
    return t.origin_lat - (np.arange(r.height) + 0.5) * t.pixel_height


def pixel_area_m2(r: RasterGrid, row: int) -> float:
    if not 0 <= row < r.height:
        raise RasterError(f"row {row} outside raster of height {r.height}")
    t = r.transform
    lat = t.origin_lat - (row + 0.5) * t.pixel_height
    return t.pixel_width * t.pixel_height * DEG_TO_M ** 2 * math.cos(math.radians(lat))


def row_areas_m2(r: RasterGrid) -> np.ndarray:
    """pixel_area_m2 for every row, vectorised."""
    t = r.transform
    return t.pixel_width * t.pixel_height * DEG_TO_M ** 2 * np.cos(np.radians(row_center_lats(r)))


def pixel_size_m(r: RasterGrid) -> float:
    """Nominal pixel edge in metres (equatorial scale of the pixel width)."""
    return r.transform.pixel_width * DEG_TO_M


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

_TIFF_SUFFIXES = ('.tif', '.tiff')
_RAW_SUFFIXES = ('.bin', '.json')
_HEADER_KEYS = {'width', 'height', 'bands', 'dtype', 'nodata', 'transform'}


def _raw_paths(path: Path) -> Tuple[Path, Path]:
    return path.with_suffix('.json'), path.with_suffix('.bin')


def _encode_nodata(nodata):
    if nodata is None:
        return None
    if isinstance(nodata, float) and math.isnan(nodata):
        return 'nan'
    return nodata


def _decode_nodata(value):
    if value is None:
        return None
    if value == 'nan':
        return float('nan')
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedHeaderError(f"nodata must be a number, null or 'nan', got {value!r}")
    return value


def write_raster(r: RasterGrid, path: PathLike, compress: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = path.suffix.lower()
    if suffix in _TIFF_SUFFIXES:
        _write_geotiff(r, path, compress)
    elif suffix in _RAW_SUFFIXES:
        _write_raw(r, path)
    else:
        raise RasterFormatError(f"unknown raster suffix {path.suffix!r} for {path}")
    return path


def read_raster(path: PathLike) -> RasterGrid:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in _TIFF_SUFFIXES:
        return _read_geotiff(path)
    if suffix in _RAW_SUFFIXES:
        return _read_raw(path)
    raise RasterFormatError(f"unknown raster suffix {path.suffix!r} for {path}")


def _write_raw(r: RasterGrid, path: Path) -> None:
    header_path, payload_path = _raw_paths(path)
    header = {
        'width': r.width,
        'height': r.height,
        'bands': r.bands,
        'dtype': r.dtype,
        'nodata': _encode_nodata(r.nodata),
        'transform': r.transform.as_list(),
    }
    header_path.write_text(json.dumps(header, sort_keys=True) + '\n')
    payload_path.write_bytes(r.data.astype(r.data.dtype.newbyteorder('<'), copy=False).tobytes())


def _read_raw(path: Path) -> RasterGrid:
    header_path, payload_path = _raw_paths(path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedHeaderError(f"{header_path}: not valid JSON ({exc})") from exc
    if not isinstance(header, dict) or set(header) != _HEADER_KEYS:
        got = sorted(header) if isinstance(header, dict) else type(header).__name__
        raise MalformedHeaderError(f"{header_path}: expected keys {sorted(_HEADER_KEYS)}, got {got}")

    dtype = header['dtype']
    if dtype not in SUPPORTED_DTYPES:
        raise DtypeMismatchError(f"{header_path}: unsupported dtype {dtype!r}")
    try:
        width, height, bands = (int(header[k]) for k in ('width', 'height', 'bands'))
        transform = GeoTransform(*(float(v) for v in header['transform']))
    except (TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"{header_path}: {exc}") from exc
    if min(width, height, bands) < 1:
        raise MalformedHeaderError(f"{header_path}: non-positive dimensions {bands}x{height}x{width}")
    nodata = _decode_nodata(header['nodata'])

    le_dtype = np.dtype(dtype).newbyteorder('<')
    payload = payload_path.read_bytes()
    expected = width * height * bands * le_dtype.itemsize
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{payload_path}: {len(payload)} bytes, header declares {expected} "
            f"({bands}x{height}x{width} {dtype})"
        )
    if len(payload) > expected:
        raise RasterFormatError(f"{payload_path}: {len(payload) - expected} trailing bytes")
    data = np.frombuffer(payload, dtype=le_dtype).reshape(bands, height, width).astype(dtype)
    return RasterGrid(data, transform, nodata)


def _write_geotiff(r: RasterGrid, path: Path, compress: Optional[str]) -> None:
    profile = {
        'driver': 'GTiff',
        'width': r.width,
        'height': r.height,
        'count': r.bands,
        'dtype': r.dtype,
        'crs': 'EPSG:4326',
        'transform': r.transform.to_affine(),
        'nodata': r.nodata,
        'tiled': False,
    }
    if compress:
        profile['compress'] = compress
    try:
        with rasterio.open(path, 'w', **profile) as dst:
            dst.write(r.data)
    except RasterioError as exc:
        raise RasterFormatError(f"{path}: GeoTIFF write failed ({exc})") from exc


def _read_geotiff(path: Path) -> RasterGrid:
    if not path.exists():
        raise FileNotFoundError(f"raster {path} not found")
    try:
        with rasterio.open(path) as src:
            dtypes = set(src.dtypes)
            if len(dtypes) != 1 or next(iter(dtypes)) not in SUPPORTED_DTYPES:
                raise DtypeMismatchError(f"{path}: unsupported band dtypes {sorted(dtypes)}")
            data = src.read()
            transform = GeoTransform.from_affine(src.transform)
            nodata = src.nodata
    except RasterioError as exc:
        raise MalformedHeaderError(f"{path}: not a readable GeoTIFF ({exc})") from exc
    return RasterGrid(data, transform, nodata)
