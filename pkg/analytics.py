"""
Downstream products from the final building map.

    density_map            % building pixels per ~250 m block
    building_area          total footprint area in m^2
    solar_potential_*      rooftop PV yield, P = PV * (1 - loss) * (A_b / a_p) * 365
    zonal_building_area    footprint area per region polygon
    regress / regress_table  least squares + Pearson rho against
                             socioeconomic variables

Units: PV in kWh/kWp/day, P in kWh/year, areas in m^2. Conversions to
GWh/PWh only happen in presentation code.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import shapely

from labelgen import PolygonSet, geometry_window
from raster_core import (DEFAULT_NODATA, RasterGrid, pixel_size_m, row_areas_m2)

logger = logging.getLogger(__name__)

DEFAULT_CELL_M = 250.0
DENSITY_NODATA = DEFAULT_NODATA['float32']
DAYS_PER_YEAR = 365
UNASSIGNED = 'unassigned'
SOCIO_COLUMNS = ('population', 'co2_emission', 'electricity', 'energy', 'gdp', 'waste')

# Row areas are held as integer multiples of 2**-16 m^2 so that per-region
# sums add up to the whole-raster total without rounding drift.
_AREA_SCALE = 1 << 16

KWH_PER_PWH = 1e12


class AnalyticsError(ValueError):
    pass


class RegressionError(AnalyticsError):
    pass


# ---------------------------------------------------------------------------
# Blocks and areas
# ---------------------------------------------------------------------------

def block_size(r: RasterGrid, cell_size_m: float = DEFAULT_CELL_M) -> int:
    px = pixel_size_m(r)
    if cell_size_m < px:
        raise AnalyticsError(f"cell size {cell_size_m} m is smaller than the {px:.3f} m pixel")
    return max(1, round(cell_size_m / px))


def _building_and_valid(buildings: RasterGrid) -> Tuple[np.ndarray, np.ndarray]:
    valid = buildings.pixel_valid()
    return (buildings.data[0] != 0) & valid, valid


def _block_sum(values: np.ndarray, block: int) -> np.ndarray:
    """Sum over block x block windows anchored at (0, 0); trailing partial blocks kept."""
    h, w = values.shape
    bh, bw = -(-h // block), -(-w // block)
    padded = np.zeros((bh * block, bw * block), dtype=values.dtype)
    padded[:h, :w] = values
    return padded.reshape(bh, block, bw, block).sum(axis=(1, 3))


def block_counts(buildings: RasterGrid, block: int) -> Tuple[np.ndarray, np.ndarray]:
    """(building count, valid count) per block."""
    is_building, valid = _building_and_valid(buildings)
    return _block_sum(is_building.astype(np.int64), block), _block_sum(valid.astype(np.int64), block)


def density_map(buildings: RasterGrid, cell_size_m: float = DEFAULT_CELL_M) -> RasterGrid:
    block = block_size(buildings, cell_size_m)
    counts, valid = block_counts(buildings, block)
    density = np.full(counts.shape, DENSITY_NODATA, dtype=np.float32)
    has_valid = valid > 0
    density[has_valid] = (100.0 * counts[has_valid] / valid[has_valid]).astype(np.float32)
    return RasterGrid(density, buildings.transform.scaled(block), DENSITY_NODATA)


def _quantised_row_areas(r: RasterGrid) -> List[int]:
    return [int(v) for v in np.rint(row_areas_m2(r) * _AREA_SCALE).astype(np.int64)]


def _area_from_rows(row_counts: Iterable[int], quantised: Sequence[int]) -> float:
    return sum(int(c) * q for c, q in zip(row_counts, quantised)) / _AREA_SCALE


def building_area(buildings: RasterGrid) -> float:
    """Sum of pixel areas over building pixels, m^2."""
    is_building, _ = _building_and_valid(buildings)
    return _area_from_rows(is_building.sum(axis=1), _quantised_row_areas(buildings))


# ---------------------------------------------------------------------------
# Solar potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolarParams:
    a_p: float = 10.0
    loss: float = 0.10
    pv_default: float = 3.5
    a_p_range: Tuple[float, float] = (10.0, 30.0)
    atlas_band: Tuple[float, float] = (-50.0, 60.0)

    def __post_init__(self):
        if not self.a_p > 0:
            raise AnalyticsError(f"a_p must be positive, got {self.a_p}")
        if not 0 <= self.loss < 1:
            raise AnalyticsError(f"loss must be in [0, 1), got {self.loss}")
        if not self.pv_default > 0:
            raise AnalyticsError(f"pv_default must be positive, got {self.pv_default}")
        lo, hi = self.a_p_range
        if not 0 < lo <= hi:
            raise AnalyticsError(f"a_p_range must satisfy 0 < low <= high, got {self.a_p_range}")
        if not self.atlas_band[0] < self.atlas_band[1]:
            raise AnalyticsError(f"atlas_band must be (south, north), got {self.atlas_band}")

    @property
    def n_d(self) -> int:
        return DAYS_PER_YEAR

    def with_a_p(self, a_p: float) -> 'SolarParams':
        return SolarParams(a_p, self.loss, self.pv_default, self.a_p_range, self.atlas_band)

    @classmethod
    def from_dict(cls, raw: Optional[dict]) -> 'SolarParams':
        raw = dict(raw or {})
        for key in ('a_p_range', 'atlas_band'):
            if key in raw:
                raw[key] = tuple(float(v) for v in raw[key])
        unknown = set(raw) - {'a_p', 'loss', 'pv_default', 'a_p_range', 'atlas_band'}
        if unknown:
            raise AnalyticsError(f"unknown solar parameter(s): {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return {'a_p': self.a_p, 'loss': self.loss, 'pv_default': self.pv_default,
                'a_p_range': list(self.a_p_range), 'atlas_band': list(self.atlas_band)}


def annual_yield_kwh(area_m2, pv, params: SolarParams):
    """Closed-form yearly yield for footprint area and daily PV yield (scalars or arrays)."""
    return pv * (1.0 - params.loss) * (area_m2 / params.a_p) * params.n_d


def _sample_atlas(atlas: RasterGrid, lons: np.ndarray, lats: np.ndarray, params: SolarParams) -> np.ndarray:
    """Nearest-neighbour PV per point; pv_default outside the atlas or its latitude band."""
    t = atlas.transform
    cols = np.floor((lons - t.origin_lon) / t.pixel_width).astype(np.int64)
    rows = np.floor((t.origin_lat - lats) / t.pixel_height).astype(np.int64)
    inside = (cols >= 0) & (cols < atlas.width) & (rows >= 0) & (rows < atlas.height)
    south, north = params.atlas_band
    inside &= (lats >= south) & (lats <= north)
    pv = np.full(lons.shape, params.pv_default, dtype=np.float64)
    r, c = rows[inside], cols[inside]
    values = atlas.data[0][r, c].astype(np.float64)
    ok = atlas.pixel_valid()[r, c]
    pv[np.flatnonzero(inside)[ok]] = values[ok]
    return pv


def solar_potential_map(buildings: RasterGrid, pv_atlas: Optional[RasterGrid], params: SolarParams,
                        cell_size_m: float = DEFAULT_CELL_M) -> RasterGrid:
    """Yearly rooftop yield per block in kWh; blocks without valid pixels are nodata."""
    block = block_size(buildings, cell_size_m)
    is_building, valid = _building_and_valid(buildings)
    weighted = is_building * row_areas_m2(buildings)[:, np.newaxis]
    area = _block_sum(weighted, block)
    has_valid = _block_sum(valid.astype(np.int64), block) > 0

    transform = buildings.transform.scaled(block)
    bh, bw = area.shape
    lons = transform.origin_lon + (np.arange(bw) + 0.5) * transform.pixel_width
    lats = transform.origin_lat - (np.arange(bh) + 0.5) * transform.pixel_height
    grid_lons, grid_lats = np.meshgrid(lons, lats)
    if pv_atlas is None:
        pv = np.full(area.shape, params.pv_default)
    else:
        pv = _sample_atlas(pv_atlas, grid_lons, grid_lats, params)

    potential = annual_yield_kwh(area, pv, params).astype(np.float32)
    potential[~has_valid] = DENSITY_NODATA
    return RasterGrid(potential, transform, DENSITY_NODATA)


def solar_potential_total(buildings: Union[RasterGrid, float], pv: Union[RasterGrid, float, None],
                          params: SolarParams, cell_size_m: float = DEFAULT_CELL_M) -> float:
    """Yearly total in kWh from a building map or a bare area, with constant or atlas PV."""
    if isinstance(pv, RasterGrid) or pv is None:
        if not isinstance(buildings, RasterGrid):
            if pv is None:
                return float(annual_yield_kwh(float(buildings), params.pv_default, params))
            raise AnalyticsError("an atlas needs a building raster to sample locations from")
        m = solar_potential_map(buildings, pv, params, cell_size_m)
        values = m.data[0][m.pixel_valid()]
        return math.fsum(values.astype(np.float64).tolist())
    area = building_area(buildings) if isinstance(buildings, RasterGrid) else float(buildings)
    if area < 0:
        raise AnalyticsError(f"area must be non-negative, got {area}")
    return float(annual_yield_kwh(area, float(pv), params))


def solar_potential_band(area_m2: float, pv: float, params: SolarParams) -> Tuple[float, float]:
    """(low, high) yearly yield over the a_p range; the largest a_p gives the low end."""
    lo_ap, hi_ap = params.a_p_range
    return (solar_potential_total(area_m2, pv, params.with_a_p(hi_ap)),
            solar_potential_total(area_m2, pv, params.with_a_p(lo_ap)))


def required_pv_yield(target_kwh: float, area_m2: float, params: SolarParams) -> float:
    """Daily PV yield that makes annual_yield_kwh(area, PV) equal target_kwh."""
    per_unit = annual_yield_kwh(area_m2, 1.0, params)
    if per_unit <= 0:
        raise AnalyticsError("cannot invert yield for zero area")
    return target_kwh / per_unit


def consumption_coverage(potential_kwh: float, consumption_kwh: float) -> float:
    if not consumption_kwh > 0:
        raise AnalyticsError(f"consumption must be positive, got {consumption_kwh}")
    return potential_kwh / consumption_kwh


# ---------------------------------------------------------------------------
# Zonal statistics
# ---------------------------------------------------------------------------

@dataclass
class RegionStats:
    region_id: str
    building_area_m2: float
    values: Dict[str, Optional[float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.building_area_m2 < 0:
            raise AnalyticsError(f"{self.region_id}: negative building area {self.building_area_m2}")


def zonal_building_area(buildings: RasterGrid, regions: PolygonSet) -> List[RegionStats]:
    """Building area per region id (sorted), plus an 'unassigned' bucket last.

    A pixel belongs to the first region, in id order, whose polygon contains
    or touches its centre.
    """
    regions.validate()
    is_building, _ = _building_and_valid(buildings)
    remaining = is_building.copy()
    quantised = _quantised_row_areas(buildings)
    t = buildings.transform

    stats = []
    for region_id, geom in sorted(regions.by_id().items()):
        hits = np.zeros_like(remaining)
        window = geometry_window(geom, t, buildings.width, buildings.height)
        if window is not None:
            rows, cols = window
            rr, cc = np.nonzero(remaining[rows, cols])
            if rr.size:
                rr += rows.start
                cc += cols.start
                lons = t.origin_lon + (cc + 0.5) * t.pixel_width
                lats = t.origin_lat - (rr + 0.5) * t.pixel_height
                inside = shapely.intersects_xy(geom, lons, lats)
                hits[rr[inside], cc[inside]] = True
        remaining &= ~hits
        stats.append(RegionStats(region_id, _area_from_rows(hits.sum(axis=1), quantised)))
    stats.append(RegionStats(UNASSIGNED, _area_from_rows(remaining.sum(axis=1), quantised)))
    return stats


def zonal_table(stats: Sequence[RegionStats]) -> pd.DataFrame:
    rows = []
    for s in stats:
        row = {'region_id': s.region_id, 'building_area_m2': s.building_area_m2}
        row.update(s.values)
        rows.append(row)
    return pd.DataFrame(rows)


def read_socioeconomic_csv(path: Union[str, Path]) -> pd.DataFrame:
    """region_id-indexed table; blank cells become NaN."""
    df = pd.read_csv(path, dtype={'region_id': str}, keep_default_na=True)
    if 'region_id' not in df.columns:
        raise AnalyticsError(f"{path}: missing region_id column")
    unknown = set(df.columns) - {'region_id', *SOCIO_COLUMNS}
    if unknown:
        raise AnalyticsError(f"{path}: unknown column(s) {sorted(unknown)}")
    if df['region_id'].duplicated().any():
        raise AnalyticsError(f"{path}: duplicate region_id values")
    return df.set_index('region_id')


def attach_socioeconomic(stats: Sequence[RegionStats], table: pd.DataFrame) -> List[RegionStats]:
    out = []
    for s in stats:
        if s.region_id == UNASSIGNED:
            continue
        values = {}
        if s.region_id in table.index:
            for col in table.columns:
                v = table.at[s.region_id, col]
                values[col] = None if pd.isna(v) else float(v)
        out.append(RegionStats(s.region_id, s.building_area_m2, values))
    return out


# ---------------------------------------------------------------------------
# Regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    rho: Optional[float]
    n: int


def regress(x: Sequence[float], y: Sequence[Optional[float]]) -> RegressionResult:
    """Ordinary least squares y = slope * x + intercept, plus Pearson rho.

    Pairs whose y is missing (None or NaN) are dropped. A constant y fits a
    flat line whose correlation is undefined: rho is None.
    """
    if len(x) != len(y):
        raise RegressionError(f"x has {len(x)} values but y has {len(y)}")
    pairs = [(float(a), float(b)) for a, b in zip(x, y)
             if b is not None and not math.isnan(float(b)) and not math.isnan(float(a))]
    n = len(pairs)
    if n < 2:
        raise RegressionError(f"need at least 2 pairs, got {n}")
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    mean_x = math.fsum(xs) / n
    mean_y = math.fsum(ys) / n
    dx = [v - mean_x for v in xs]
    dy = [v - mean_y for v in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    if min(xs) == max(xs):
        raise RegressionError("x is constant; slope undefined")
    if min(ys) == max(ys):
        return RegressionResult(0.0, ys[0], None, n)
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    rho = max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))
    return RegressionResult(slope, intercept, rho, n)


def regress_table(stats: Sequence[RegionStats], variables: Sequence[str] = SOCIO_COLUMNS,
                  log: bool = False) -> pd.DataFrame:
    """One regression row per variable: variable,slope,intercept,rho,n.

    With log=True both axes are log10 and non-positive values are dropped.
    Variables that cannot be fitted are logged and left out; a constant
    variable is kept with an empty rho.
    """
    rows = []
    for var in variables:
        xs, ys = [], []
        for s in stats:
            if s.region_id == UNASSIGNED:
                continue
            v = s.values.get(var)
            if v is None:
                continue
            if log:
                if s.building_area_m2 <= 0 or v <= 0:
                    continue
                xs.append(math.log10(s.building_area_m2))
                ys.append(math.log10(v))
            else:
                xs.append(s.building_area_m2)
                ys.append(v)
        try:
            res = regress(xs, ys)
        except RegressionError as exc:
            logger.warning("Skipping regression for %s: %s", var, exc)
            continue
        rows.append({'variable': var, 'slope': res.slope, 'intercept': res.intercept,
                     'rho': res.rho, 'n': res.n})
    return pd.DataFrame(rows, columns=['variable', 'slope', 'intercept', 'rho', 'n'])
