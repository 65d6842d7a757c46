"""
Pipeline Manager
Selects 0.2 degree cells from a settlement mask, picks scenes per cell and
runs every stage, persisting each one to {stage}/{j}_{i}.tif under out_dir.

    select scenes -> calibrate -> mosaic -> segmenters -> binarize -> vote
    -> land-cover filter -> 5 degree tiles -> analytics

Segmentation work items are (segmenter x cell) pairs spread round-robin over
a fixed pool of workers; nothing they produce depends on which worker ran it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import shapely
from shapely.geometry import box

from analytics import (SolarParams, attach_socioeconomic, building_area, density_map,
                       read_socioeconomic_csv, regress_table, solar_potential_map, zonal_building_area,
                       zonal_table, RegionStats, UNASSIGNED)
from calibration import CalibrationMode, calibrate
from ensemble import (DEFAULT_VOTE_THRESHOLD, Segmenter, SegmentationError, VoteStack, binarize, check_labels,
                      get_segmenter, majority_vote)
from evaluation import Confusion, confusion, score_table
from labelgen import PolygonSet, rasterize
from postprocess import FilterRules, filter_resampled
from raster_core import (GRID_SIZE_DEG, TILE_SIZE_DEG, GeoBox, GridCell, RasterGrid, TileSpec,
                         mosaic, read_raster, split_into_tiles, write_raster)

logger = logging.getLogger(__name__)

SURFACE_REFLECTANCE = 'surface-reflectance'
BASEMAP = 'basemap'
SCENE_KINDS = (SURFACE_REFLECTANCE, BASEMAP)
MANIFEST_COLUMNS = ['scene_id', 'min_lon', 'min_lat', 'max_lon', 'max_lat',
                    'cloud_pct', 'haze_pct', 'year', 'kind', 'path']
ANALYTICS_PRODUCTS = ('density', 'solar', 'zonal', 'regression')

STATUS_OK = 'ok'
STATUS_SKIPPED = 'skipped'
STATUS_FAILED = 'failed'


class ConfigError(ValueError):
    pass


class CellSkipped(RuntimeError):
    pass


class ManifestError(ValueError):
    """Scene manifest that cannot be parsed into scene records."""


# ---------------------------------------------------------------------------
# Scene manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    footprint: GeoBox
    cloud_pct: float
    haze_pct: float
    year: int
    kind: str
    path: str

    def __post_init__(self):
        for name in ('cloud_pct', 'haze_pct'):
            value = getattr(self, name)
            if not 0 <= value <= 100:
                raise ValueError(f"scene {self.scene_id}: {name} {value} outside [0, 100]")
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"scene {self.scene_id}: unknown kind {self.kind!r}")

    def to_row(self) -> dict:
        b = self.footprint
        return {'scene_id': self.scene_id, 'min_lon': b.min_lon, 'min_lat': b.min_lat,
                'max_lon': b.max_lon, 'max_lat': b.max_lat, 'cloud_pct': self.cloud_pct,
                'haze_pct': self.haze_pct, 'year': self.year, 'kind': self.kind, 'path': self.path}


def read_manifest(path: Union[str, Path]) -> List[SceneRecord]:
    """Scene manifest CSV; relative scene paths resolve against the manifest's directory."""
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype={'scene_id': str, 'kind': str, 'path': str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    missing = set(MANIFEST_COLUMNS) - set(df.columns)
    if missing:
        raise ManifestError(f"{path}: missing manifest column(s) {sorted(missing)}")
    records = []
    for line, row in enumerate(df.itertuples(index=False), start=2):
        try:
            scene_path = Path(row.path)
            if not scene_path.is_absolute():
                scene_path = path.parent / scene_path
            records.append(SceneRecord(
                scene_id=row.scene_id,
                footprint=GeoBox(float(row.min_lon), float(row.min_lat), float(row.max_lon), float(row.max_lat)),
                cloud_pct=float(row.cloud_pct),
                haze_pct=float(row.haze_pct),
                year=int(row.year),
                kind=row.kind,
                path=str(scene_path),
            ))
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"{path}, line {line}: {exc}") from exc
    return records


def write_manifest(records: Sequence[SceneRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([r.to_row() for r in records], columns=MANIFEST_COLUMNS).to_csv(path, index=False)
    return path


def summarize_manifest(records: Sequence[SceneRecord]) -> pd.DataFrame:
    """Scene count and mean cloud/haze per (kind, year)."""
    if not records:
        return pd.DataFrame(columns=['kind', 'year', 'n_scenes', 'mean_cloud_pct', 'mean_haze_pct'])
    df = pd.DataFrame([r.to_row() for r in records])
    summary = (df.groupby(['kind', 'year'])
                 .agg(n_scenes=('scene_id', 'count'),
                      mean_cloud_pct=('cloud_pct', 'mean'),
                      mean_haze_pct=('haze_pct', 'mean'))
                 .reset_index()
                 .sort_values(['kind', 'year'], ascending=[False, False], ignore_index=True))
    return summary


# ---------------------------------------------------------------------------
# Cell and scene selection
# ---------------------------------------------------------------------------

def select_cells(settlement_mask: RasterGrid) -> List[GridCell]:
    """Every 0.2 degree cell holding at least one built pixel centre, sorted by (j, i)."""
    built = (settlement_mask.data[0] != 0) & settlement_mask.pixel_valid()
    rows, cols = np.nonzero(built)
    if rows.size == 0:
        return []
    t = settlement_mask.transform
    step = round(1 / GRID_SIZE_DEG)
    lons = t.origin_lon + (cols + 0.5) * t.pixel_width
    lats = t.origin_lat - (rows + 0.5) * t.pixel_height
    ii = np.floor(np.round(lons * step, 9)).astype(np.int64)
    jj = np.floor(np.round(lats * step, 9)).astype(np.int64)
    pairs = sorted(set(zip(jj.tolist(), ii.tolist())))
    return [GridCell(j=j, i=i) for j, i in pairs]


@dataclass(frozen=True)
class QueryRules:
    max_cloud_pct: float = 10.0
    max_haze_pct: float = 10.0
    cloud_haze_rule: str = 'each'
    preferred_year: int = 2019
    fallback_years: Tuple[int, ...] = (2018,)
    coverage_threshold: float = 0.99

    def __post_init__(self):
        if self.cloud_haze_rule not in ('each', 'sum'):
            raise ConfigError(f"cloud_haze_rule must be 'each' or 'sum', got {self.cloud_haze_rule!r}")
        if not 0 < self.coverage_threshold <= 1:
            raise ConfigError(f"coverage_threshold must be in (0, 1], got {self.coverage_threshold}")

    def passes(self, scene: SceneRecord) -> bool:
        if self.cloud_haze_rule == 'sum':
            return scene.cloud_pct + scene.haze_pct < self.max_cloud_pct
        return scene.cloud_pct < self.max_cloud_pct and scene.haze_pct < self.max_haze_pct


def _cell_polygon(cell: GridCell):
    b = cell.bbox
    return box(b.min_lon, b.min_lat, b.max_lon, b.max_lat)


def coverage(scenes: Sequence[SceneRecord], cell: GridCell) -> float:
    """Fraction of the cell's area covered by the union of scene footprints."""
    if not scenes:
        return 0.0
    cell_poly = _cell_polygon(cell)
    footprints = [box(s.footprint.min_lon, s.footprint.min_lat, s.footprint.max_lon, s.footprint.max_lat)
                  for s in scenes]
    covered = shapely.intersection(shapely.union_all(footprints), cell_poly)
    return covered.area / cell_poly.area


def _recency_key(s: SceneRecord):
    return (-s.year, s.cloud_pct, s.scene_id)


def select_scenes(manifest: Sequence[SceneRecord], cell: GridCell,
                  rules: Optional[QueryRules] = None) -> List[SceneRecord]:
    """Clean scenes for a cell, most recent first, with year then basemap fallback."""
    rules = rules or QueryRules()
    target = cell.bbox
    clean = [s for s in manifest
             if s.kind == SURFACE_REFLECTANCE and rules.passes(s) and s.footprint.intersects(target)]
    chosen = [s for s in clean if s.year == rules.preferred_year]
    for year in rules.fallback_years:
        if coverage(chosen, cell) >= rules.coverage_threshold:
            break
        chosen += [s for s in clean if s.year == year]
    ordered = sorted(chosen, key=_recency_key)
    if coverage(ordered, cell) < rules.coverage_threshold:
        basemaps = [s for s in manifest if s.kind == BASEMAP and s.footprint.intersects(target)]
        ordered += sorted(basemaps, key=_recency_key)
    if not ordered:
        raise CellSkipped(f"cell {cell.cell_id}: no qualifying scene and no basemap")
    return ordered


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_TOP_KEYS = {'grid_size_deg', 'tile_size_deg', 'resolution_deg', 'vote_threshold', 'workers', 'seed',
             'calibration_mode', 'segmenters', 'query', 'filter', 'solar', 'analytics', 'inputs', 'out_dir'}
_QUERY_KEYS = {'max_cloud_pct', 'max_haze_pct', 'cloud_haze_rule', 'preferred_year', 'fallback_years',
               'coverage_threshold'}
_FILTER_KEYS = {'urban_remove_classes', 'rural_keep_classes'}
_ANALYTICS_KEYS = {'density_cell_m', 'products', 'log_regression'}
_INPUT_KEYS = {'manifest', 'settlement', 'landcover', 'urban', 'pv_atlas', 'regions', 'socioeconomic',
               'reference'}
_REQUIRED_INPUTS = ('manifest', 'settlement', 'landcover', 'urban')
_EXECUTION_ONLY = ('workers', 'out_dir')


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object, got {type(section).__name__}")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def default_workers() -> int:
    raw = os.environ.get('GBM_WORKERS', '1').strip() or '1'
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"GBM_WORKERS must be an integer, got {raw!r}") from None


@dataclass
class PipelineConfig:
    inputs: Dict[str, str]
    out_dir: str = 'out'
    grid_size_deg: float = GRID_SIZE_DEG
    tile_size_deg: int = TILE_SIZE_DEG
    resolution_deg: Optional[float] = None
    vote_threshold: int = DEFAULT_VOTE_THRESHOLD
    workers: int = 1
    seed: int = 0
    calibration_mode: str = CalibrationMode.PER_SCOPE.value
    segmenters: List[str] = field(default_factory=lambda: ['baseline'] * 4)
    query: QueryRules = field(default_factory=QueryRules)
    filter: FilterRules = field(default_factory=FilterRules)
    solar: SolarParams = field(default_factory=SolarParams)
    density_cell_m: float = 250.0
    products: List[str] = field(default_factory=lambda: list(ANALYTICS_PRODUCTS))
    log_regression: bool = False
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        if self.grid_size_deg != GRID_SIZE_DEG:
            raise ConfigError(f"grid_size_deg is fixed at {GRID_SIZE_DEG}")
        if self.tile_size_deg != TILE_SIZE_DEG:
            raise ConfigError(f"tile_size_deg is fixed at {TILE_SIZE_DEG}")
        if self.resolution_deg is not None and not self.resolution_deg > 0:
            raise ConfigError(f"resolution_deg must be positive, got {self.resolution_deg}")
        if not self.segmenters:
            raise ConfigError("at least one segmenter is required")
        for spec in self.segmenters:
            try:
                get_segmenter(spec)
            except SegmentationError as exc:
                raise ConfigError(str(exc)) from exc
        if not 1 <= self.vote_threshold <= len(self.segmenters):
            raise ConfigError(f"vote_threshold {self.vote_threshold} outside 1..{len(self.segmenters)}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        try:
            CalibrationMode.parse(self.calibration_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        unknown = set(self.products) - set(ANALYTICS_PRODUCTS)
        if unknown:
            raise ConfigError(f"unknown analytics product(s) {sorted(unknown)}")
        _reject_unknown(self.inputs, _INPUT_KEYS, 'inputs')
        missing = [k for k in _REQUIRED_INPUTS if not self.inputs.get(k)]
        if missing:
            raise ConfigError(f"inputs: missing required path(s) {missing}")

    def input_path(self, key: str) -> Optional[Path]:
        value = self.inputs.get(key)
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def out_path(self) -> Path:
        p = Path(self.out_dir)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        return {
            'grid_size_deg': self.grid_size_deg,
            'tile_size_deg': self.tile_size_deg,
            'resolution_deg': self.resolution_deg,
            'vote_threshold': self.vote_threshold,
            'workers': self.workers,
            'seed': self.seed,
            'calibration_mode': self.calibration_mode,
            'segmenters': list(self.segmenters),
            'query': {
                'max_cloud_pct': self.query.max_cloud_pct,
                'max_haze_pct': self.query.max_haze_pct,
                'cloud_haze_rule': self.query.cloud_haze_rule,
                'preferred_year': self.query.preferred_year,
                'fallback_years': list(self.query.fallback_years),
                'coverage_threshold': self.query.coverage_threshold,
            },
            'filter': {
                'urban_remove_classes': sorted(int(c) for c in self.filter.urban_remove),
                'rural_keep_classes': sorted(int(c) for c in self.filter.rural_keep),
            },
            'solar': self.solar.to_dict(),
            'analytics': {
                'density_cell_m': self.density_cell_m,
                'products': list(self.products),
                'log_regression': self.log_regression,
            },
            'inputs': dict(sorted(self.inputs.items())),
            'out_dir': self.out_dir,
        }

    def config_hash(self) -> str:
        """SHA-256 over everything that can change artifact bytes."""
        payload = {k: v for k, v in self.to_dict().items() if k not in _EXECUTION_ONLY}
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def config_from_dict(raw: dict, base_dir: Union[str, Path, None] = None) -> PipelineConfig:
    _reject_unknown(raw, _TOP_KEYS, 'config')
    query = raw.get('query', {})
    _reject_unknown(query, _QUERY_KEYS, 'query')
    filt = raw.get('filter', {})
    _reject_unknown(filt, _FILTER_KEYS, 'filter')
    analytics = raw.get('analytics', {})
    _reject_unknown(analytics, _ANALYTICS_KEYS, 'analytics')
    if 'inputs' not in raw:
        raise ConfigError("config: missing 'inputs' section")

    try:
        query_rules = QueryRules(**{**query, 'fallback_years': tuple(query.get('fallback_years', (2018,)))})
        filter_rules = FilterRules.from_config(filt.get('urban_remove_classes'), filt.get('rural_keep_classes'))
        solar = SolarParams.from_dict(raw.get('solar'))
        cfg = PipelineConfig(
            inputs={k: str(v) for k, v in raw['inputs'].items() if v is not None}
            if isinstance(raw['inputs'], dict) else raw['inputs'],
            out_dir=str(raw.get('out_dir', 'out')),
            grid_size_deg=float(raw.get('grid_size_deg', GRID_SIZE_DEG)),
            tile_size_deg=int(raw.get('tile_size_deg', TILE_SIZE_DEG)),
            resolution_deg=None if raw.get('resolution_deg') is None else float(raw['resolution_deg']),
            vote_threshold=int(raw.get('vote_threshold', DEFAULT_VOTE_THRESHOLD)),
            workers=int(raw['workers']) if 'workers' in raw else default_workers(),
            seed=int(raw.get('seed', 0)),
            calibration_mode=str(raw.get('calibration_mode', CalibrationMode.PER_SCOPE.value)),
            segmenters=[str(s) for s in raw.get('segmenters', ['baseline'] * 4)],
            query=query_rules,
            filter=filter_rules,
            solar=solar,
            density_cell_m=float(analytics.get('density_cell_m', 250.0)),
            products=list(analytics.get('products', ANALYTICS_PRODUCTS)),
            log_regression=bool(analytics.get('log_regression', False)),
            base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: Union[str, Path]) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(raw, base_dir=path.resolve().parent)


# ---------------------------------------------------------------------------
# Run
# ---------------------------------------------------------------------------

@dataclass
class CellRun:
    cell: GridCell
    status: str = STATUS_OK
    scenes: List[str] = field(default_factory=list)
    error: Optional[str] = None
    mosaic: Optional[RasterGrid] = None
    binaries: Dict[int, RasterGrid] = field(default_factory=dict)
    buildings: Optional[RasterGrid] = None

    def as_dict(self) -> dict:
        return {'cell_id': self.cell.cell_id, 'j': self.cell.j, 'i': self.cell.i, 'status': self.status,
                'scenes': self.scenes, 'error': self.error}


def stage_path(out_dir: Path, stage: str, cell: GridCell) -> Path:
    return out_dir / stage / f"{cell.cell_id}.tif"


class PipelineManager:
    """Runs the full building-map pipeline for one config."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out_dir = config.out_path
        self.logger = logging.getLogger(__name__)
        self.segmenters: List[Segmenter] = [get_segmenter(s) for s in config.segmenters]
        self.mode = CalibrationMode.parse(config.calibration_mode)
        self.artifacts: List[Path] = []

    def cell_logger(self, cell: GridCell) -> logging.Logger:
        return logging.getLogger(f"{__name__}.Cell{cell.j}_{cell.i}")

    def _write(self, r: RasterGrid, path: Path) -> None:
        write_raster(r, path)
        self.artifacts.append(path)

    def load_inputs(self):
        cfg = self.config
        manifest = read_manifest(cfg.input_path('manifest'))
        settlement = read_raster(cfg.input_path('settlement'))
        landcover = read_raster(cfg.input_path('landcover'))
        urban = read_raster(cfg.input_path('urban'))
        return manifest, settlement, landcover, urban

    # -- stage 1: analysis-ready mosaics --------------------------------

    def prepare_cell(self, run: CellRun, manifest: Sequence[SceneRecord]) -> None:
        log = self.cell_logger(run.cell)
        try:
            scenes = select_scenes(manifest, run.cell, self.config.query)
        except CellSkipped as exc:
            run.status, run.error = STATUS_SKIPPED, str(exc)
            log.warning(f"Skipping cell: {exc}")
            return
        run.scenes = [s.scene_id for s in scenes]
        try:
            calibrated = [calibrate(read_raster(s.path), self.mode) for s in scenes]
            resolution = self.config.resolution_deg or calibrated[0].transform.pixel_width
            run.mosaic = mosaic(calibrated, run.cell.bbox, resolution)
            self._write(run.mosaic, stage_path(self.out_dir, 'mosaic', run.cell))
            log.info(f"Mosaicked {len(scenes)} scene(s): {', '.join(run.scenes)}")
        except Exception as exc:
            run.status, run.error = STATUS_FAILED, f"mosaic: {exc}"
            log.error(f"Mosaic failed: {exc}")

    # -- stage 2: segmenter x cell work items ---------------------------

    def _segment_item(self, run: CellRun, k: int) -> Tuple[CellRun, int, Optional[RasterGrid], Optional[str]]:
        seg = self.segmenters[k]
        try:
            labels = check_labels(seg.segment(run.mosaic), run.mosaic, seg.seg_id)
            binary = binarize(labels)
            write_raster(labels, stage_path(self.out_dir, f"segment-{k}", run.cell))
            write_raster(binary, stage_path(self.out_dir, f"binary-{k}", run.cell))
            return run, k, binary, None
        except Exception as exc:
            return run, k, None, f"segmenter {k} ({seg.seg_id}): {exc}"

    def _run_bucket(self, items):
        return [self._segment_item(run, k) for run, k in items]

    def segment_cells(self, runs: Sequence[CellRun]) -> None:
        items = [(run, k) for k in range(len(self.segmenters)) for run in runs]
        workers = self.config.workers
        buckets = [items[w::workers] for w in range(workers)]
        self.logger.info(f"Dispatching {len(items)} segmentation item(s) to {workers} worker(s)")
        if workers == 1:
            results = [self._run_bucket(buckets[0])]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(self._run_bucket, buckets))
        for bucket in results:
            for run, k, binary, error in bucket:
                if error is None:
                    run.binaries[k] = binary
                    continue
                self.cell_logger(run.cell).error(error)
                if run.status == STATUS_OK:
                    run.status, run.error = STATUS_FAILED, error
        for run in runs:
            for k in sorted(run.binaries):
                for stage in (f"segment-{k}", f"binary-{k}"):
                    self.artifacts.append(stage_path(self.out_dir, stage, run.cell))

    # -- stage 3: vote + filter -----------------------------------------

    def finish_cell(self, run: CellRun, landcover: RasterGrid, urban: RasterGrid) -> None:
        log = self.cell_logger(run.cell)
        try:
            votes = VoteStack([run.binaries[k] for k in range(len(self.segmenters))], self.config.vote_threshold)
            voted = majority_vote(votes)
            self._write(voted, stage_path(self.out_dir, 'vote', run.cell))
            run.buildings = filter_resampled(voted, urban, landcover, self.config.filter)
            self._write(run.buildings, stage_path(self.out_dir, 'buildings', run.cell))
            log.info(f"Final map: {int((run.buildings.data[0] == 1).sum())} building pixel(s)")
        except Exception as exc:
            run.status, run.error = STATUS_FAILED, f"vote/filter: {exc}"
            log.error(f"Vote/filter failed: {exc}")

    # -- stage 4: tiles and analytics -----------------------------------

    def write_tiles(self, done: Sequence[CellRun]) -> None:
        for tile, raster in split_into_tiles([run.buildings for run in done]).items():
            self._write(raster, self.out_dir / 'tiles' / f"{tile.tile_id}.tif")

    def run_analytics(self, done: Sequence[CellRun]) -> dict:
        cfg = self.config
        products = set(cfg.products)
        atlas_path = cfg.input_path('pv_atlas')
        atlas = read_raster(atlas_path) if atlas_path and 'solar' in products else None
        summary = {'cells': len(done), 'building_area_m2': 0.0}

        solar_totals = {'total': [], 'low': [], 'high': []}
        lo_ap, hi_ap = cfg.solar.a_p_range
        for run in done:
            summary['building_area_m2'] += building_area(run.buildings)
            if 'density' in products:
                self._write(density_map(run.buildings, cfg.density_cell_m),
                            stage_path(self.out_dir, 'density', run.cell))
            if 'solar' in products:
                solar = solar_potential_map(run.buildings, atlas, cfg.solar, cfg.density_cell_m)
                self._write(solar, stage_path(self.out_dir, 'solar', run.cell))
                for key, params in (('total', cfg.solar), ('low', cfg.solar.with_a_p(hi_ap)),
                                    ('high', cfg.solar.with_a_p(lo_ap))):
                    m = solar if key == 'total' else solar_potential_map(run.buildings, atlas, params,
                                                                         cfg.density_cell_m)
                    solar_totals[key].extend(m.data[0][m.pixel_valid()].astype(np.float64).tolist())
        if 'solar' in products:
            summary['solar_kwh_per_year'] = math.fsum(solar_totals['total'])
            summary['solar_band_kwh_per_year'] = [math.fsum(solar_totals['low']), math.fsum(solar_totals['high'])]

        regions_path = cfg.input_path('regions')
        if regions_path and products & {'zonal', 'regression'}:
            regions = PolygonSet.from_geojson(regions_path, id_field='region_id')
            stats = self._zonal(done, regions)
            analytics_dir = self.out_dir / 'analytics'
            analytics_dir.mkdir(parents=True, exist_ok=True)
            if 'zonal' in products:
                path = analytics_dir / 'zonal_area.csv'
                zonal_table(stats).to_csv(path, index=False)
                self.artifacts.append(path)
            socio_path = cfg.input_path('socioeconomic')
            if socio_path and 'regression' in products:
                table = regress_table(attach_socioeconomic(stats, read_socioeconomic_csv(socio_path)),
                                      log=cfg.log_regression)
                path = analytics_dir / 'regression.csv'
                table.to_csv(path, index=False)
                self.artifacts.append(path)
                records = table.astype(object).where(table.notna(), None)
                summary['regression'] = records.to_dict(orient='records')
        return summary

    def _zonal(self, done: Sequence[CellRun], regions: PolygonSet) -> List[RegionStats]:
        totals: Dict[str, float] = {}
        for run in done:
            for s in zonal_building_area(run.buildings, regions):
                totals[s.region_id] = totals.get(s.region_id, 0.0) + s.building_area_m2
        ids = sorted(k for k in totals if k != UNASSIGNED)
        return [RegionStats(k, totals[k]) for k in ids] + [RegionStats(UNASSIGNED, totals.get(UNASSIGNED, 0.0))]

    def run_evaluation(self, done: Sequence[CellRun]) -> Optional[dict]:
        ref_path = self.config.input_path('reference')
        if not ref_path:
            return None
        reference = PolygonSet.from_geojson(ref_path)
        scores: Dict[str, Confusion] = {}
        groups = []
        for run in done:
            b = run.buildings
            ref = rasterize(reference, b.transform, b.width, b.height)
            scores[run.cell.cell_id] = confusion(b, ref)
            groups.append({'patch_id': run.cell.cell_id, 'city': run.cell.cell_id,
                           'continent': TileSpec.for_cell(run.cell).tile_id})
        table = score_table(scores, pd.DataFrame(groups))
        path = self.out_dir / 'analytics' / 'evaluation.csv'
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False)
        self.artifacts.append(path)
        world = table[table['scope'] == 'world'].iloc[0]
        return {'f1': None if pd.isna(world['f1']) else float(world['f1']),
                'iou': None if pd.isna(world['iou']) else float(world['iou'])}

    # -- driver ----------------------------------------------------------

    def run(self) -> dict:
        cfg = self.config
        manifest, settlement, landcover, urban = self.load_inputs()
        cells = select_cells(settlement)
        self.logger.info(f"Selected {len(cells)} cell(s) from the settlement mask")
        runs = [CellRun(cell) for cell in cells]

        for run in runs:
            self.prepare_cell(run, manifest)
        ready = [run for run in runs if run.status == STATUS_OK]
        if ready:
            self.segment_cells(ready)
        for run in ready:
            if run.status == STATUS_OK:
                self.finish_cell(run, landcover, urban)
        done = [run for run in runs if run.status == STATUS_OK]

        summary = None
        evaluation = None
        if done:
            self.write_tiles(done)
            summary = self.run_analytics(done)
            evaluation = self.run_evaluation(done)
            if evaluation is not None:
                summary['evaluation'] = evaluation
            path = self.out_dir / 'analytics' / 'summary.json'
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(summary, indent=2, sort_keys=True) + '\n')
            self.artifacts.append(path)

        counts = {status: sum(1 for r in runs if r.status == status)
                  for status in (STATUS_OK, STATUS_SKIPPED, STATUS_FAILED)}
        run_manifest = {
            'config_hash': cfg.config_hash(),
            'cells': [r.as_dict() for r in runs],
            'counts': counts,
            'artifacts': sorted(p.relative_to(self.out_dir).as_posix() for p in set(self.artifacts)),
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / 'run_manifest.json').write_text(json.dumps(run_manifest, indent=2, sort_keys=True) + '\n')
        self.logger.info(f"Run finished: {counts[STATUS_OK]} ok, {counts[STATUS_SKIPPED]} skipped, "
                         f"{counts[STATUS_FAILED]} failed")
        return run_manifest


def run_pipeline(config: PipelineConfig) -> dict:
    return PipelineManager(config).run()


def all_cells_failed(run_manifest: dict) -> bool:
    counts = run_manifest['counts']
    return bool(run_manifest['cells']) and counts[STATUS_OK] == 0
