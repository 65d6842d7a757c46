"""
Synthetic desk-scale world for end-to-end runs.

Every cell is an imaged 0.2 degree square with rectangular "buildings"
painted in a bright, low-NDVI spectrum over a forest/grass background, plus
bright decoy fields that share the building spectrum but sit on cropland
(inside the urban core) or bare land (outside it), so only the land-cover
filter can tell them apart. Spectra are chosen so per-scope calibration puts
the red clip at 2500 and the NIR clip at 5000, which makes the baseline
segmenter exact on this imagery.

Layout written under the output directory:

    scenes/*.tif           4-band uint16 scenes (clean, cloudy decoys, basemaps)
    manifest.csv           scene manifest
    settlement.tif         built-up mask (one built pixel per imaged cell)
    urban.tif, landcover.tif
    pv_atlas.tif           daily PV yield, 4.0 west / 5.0 east
    buildings.geojson      planted footprints
    regions.geojson        two half-cell regions per cell
    reference/<j>_<i>.tif  rasterized footprints on each cell's lattice
    groups.csv             patch_id,city,continent for the reference cells
    socioeconomic.csv      linear in region building area plus seeded noise
    config.json            ready-to-run pipeline config
    world.json             this layout plus the generating spec
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from shapely.geometry import box

from analytics import SOCIO_COLUMNS, zonal_building_area
from labelgen import PolygonSet, rasterize
from pipeline_manager import BASEMAP, SURFACE_REFLECTANCE, SceneRecord, write_manifest
from postprocess import LandCover
from raster_core import (DEFAULT_NODATA, GRID_SIZE_DEG, GeoBox, GeoTransform, GridCell, RasterGrid,
                         TileSpec, write_raster)

logger = logging.getLogger(__name__)

# (R, G, B, NIR) digital numbers
FOREST_DN = (0, 500, 500, 5000)
GRASS_DN = (1000, 500, 500, 5000)
BRIGHT_DN = (3000, 3000, 3000, 3000)
CLOUD_DN = (8000, 8000, 8000, 8000)
SCENE_NODATA = DEFAULT_NODATA['uint16']

SCENE_MARGIN = 4
BACKGROUND_BLOCK = 8
SETTLEMENT_PER_CELL = 16
ATLAS_RES_DEG = 0.01
PV_WEST, PV_EAST = 4.0, 5.0
FIRST_CELL = GridCell(j=225, i=50)

# y = slope * building_area_m2 + noise
SOCIO_SLOPES = {'population': 3.0, 'co2_emission': 0.5, 'electricity': 1.2,
                'energy': 2.0, 'gdp': 40.0, 'waste': 0.1}
SOCIO_NOISE = 0.01


@dataclass(frozen=True)
class SyntheticWorldSpec:
    seed: int = 0
    n_cells: int = 4
    buildings_per_cell: int = 12
    building_size_range: Tuple[int, int] = (3, 8)
    vegetation_fraction: float = 0.5
    cloud_scene_fraction: float = 0.5
    cell_pixels: int = 256
    decoys_per_cell: int = 2

    def __post_init__(self):
        lo, hi = self.building_size_range
        if not 1 <= self.n_cells <= 10:
            raise ValueError(f"n_cells must be in 1..10, got {self.n_cells}")
        if self.buildings_per_cell < 0 or self.decoys_per_cell < 0:
            raise ValueError("building and decoy counts must be non-negative")
        if not 1 <= lo <= hi <= 16:
            raise ValueError(f"building_size_range must satisfy 1 <= lo <= hi <= 16, got {self.building_size_range}")
        if not 0.3 <= self.vegetation_fraction <= 0.6:
            raise ValueError(f"vegetation_fraction must be in [0.3, 0.6], got {self.vegetation_fraction}")
        if not 0 <= self.cloud_scene_fraction <= 1:
            raise ValueError(f"cloud_scene_fraction must be in [0, 1], got {self.cloud_scene_fraction}")
        if self.cell_pixels < 64 or self.cell_pixels % SETTLEMENT_PER_CELL:
            raise ValueError(f"cell_pixels must be a multiple of {SETTLEMENT_PER_CELL} and >= 64")
        bright = (self.buildings_per_cell + self.decoys_per_cell) * (hi + 2) ** 2
        if bright > 0.1 * self.cell_pixels ** 2:
            raise ValueError("bright objects would cover more than 10% of a cell")

    @property
    def resolution(self) -> float:
        return GRID_SIZE_DEG / self.cell_pixels

    def cells(self) -> List[GridCell]:
        return [GridCell(FIRST_CELL.j, FIRST_CELL.i + k) for k in range(self.n_cells)]


def _place(rng, occupied: np.ndarray, size: Tuple[int, int], bounds: Tuple[int, int, int, int],
           tries: int = 2000):
    """Random free rectangle (row0, col0, row1, col1) inside bounds, 1 px apart from others."""
    h, w = size
    r_lo, r_hi, c_lo, c_hi = bounds
    for _ in range(tries):
        if r_hi - h < r_lo or c_hi - w < c_lo:
            return None
        r0 = int(rng.integers(r_lo, r_hi - h + 1))
        c0 = int(rng.integers(c_lo, c_hi - w + 1))
        if not occupied[max(r0 - 1, 0):r0 + h + 1, max(c0 - 1, 0):c0 + w + 1].any():
            occupied[r0:r0 + h, c0:c0 + w] = True
            return r0, c0, r0 + h, c0 + w
    return None


def _rect_polygon(cell: GridCell, rect, res: float):
    r0, c0, r1, c1 = rect
    b = cell.bbox
    return box(b.min_lon + c0 * res, b.max_lat - r1 * res, b.min_lon + c1 * res, b.max_lat - r0 * res)


class WorldBuilder:
    def __init__(self, spec: SyntheticWorldSpec, out_dir: Union[str, Path]):
        self.spec = spec
        self.out = Path(out_dir)
        self.rng = np.random.default_rng(spec.seed)
        self.res = spec.resolution
        self.cells = spec.cells()
        n = spec.cell_pixels
        # world lattice: imaged cells plus one empty cell to the east
        first, last = self.cells[0].bbox, GridCell(FIRST_CELL.j, FIRST_CELL.i + spec.n_cells).bbox
        self.extent = GeoBox(first.min_lon, first.min_lat, last.max_lon, first.max_lat)
        self.world_tf = GeoTransform(self.extent.min_lon, self.extent.max_lat, self.res, self.res)
        self.world_shape = (n, n * (spec.n_cells + 1))
        self.urban = np.zeros(self.world_shape, dtype=np.uint8)
        self.landcover = np.full(self.world_shape, int(LandCover.FOREST), dtype=np.uint8)
        self.buildings = PolygonSet()
        self.regions = PolygonSet()
        self.records: List[SceneRecord] = []

    # -- per cell ----------------------------------------------------------

    def _background(self, size: int) -> np.ndarray:
        """True = grass, in BACKGROUND_BLOCK squares, exact grass share."""
        blocks = -(-size // BACKGROUND_BLOCK)
        n_blocks = blocks * blocks
        grass = np.zeros(n_blocks, dtype=bool)
        grass[self.rng.permutation(n_blocks)[:round(self.spec.vegetation_fraction * n_blocks)]] = True
        grid = grass.reshape(blocks, blocks)
        tiles = np.kron(grid.astype(np.uint8), np.ones((BACKGROUND_BLOCK, BACKGROUND_BLOCK), dtype=np.uint8))
        return tiles[:size, :size].astype(bool)

    def _scene(self, cell: GridCell, grass: np.ndarray, bright: np.ndarray) -> RasterGrid:
        size = grass.shape[0]
        data = np.empty((4, size, size), dtype=np.uint16)
        for b in range(4):
            data[b] = np.where(bright, BRIGHT_DN[b], np.where(grass, GRASS_DN[b], FOREST_DN[b]))
        tf = GeoTransform(cell.bbox.min_lon - SCENE_MARGIN * self.res, cell.bbox.max_lat + SCENE_MARGIN * self.res,
                          self.res, self.res)
        return RasterGrid(data, tf, SCENE_NODATA)

    def _scene_record(self, scene_id: str, raster: RasterGrid, cloud: float, haze: float, year: int,
                      kind: str) -> SceneRecord:
        path = Path('scenes') / f"{scene_id}.tif"
        write_raster(raster, self.out / path)
        return SceneRecord(scene_id, raster.bounds, cloud, haze, year, kind, path.as_posix())

    def build_cell(self, k: int, cell: GridCell, cloudy: bool) -> None:
        spec, n, res = self.spec, self.spec.cell_pixels, self.res
        q = n // 4
        occupied = np.zeros((n, n), dtype=bool)
        urban_rect = (q, 3 * q, q, 3 * q)

        footprints = []
        lo, hi = spec.building_size_range
        for _ in range(spec.buildings_per_cell):
            size = (int(self.rng.integers(lo, hi + 1)), int(self.rng.integers(lo, hi + 1)))
            rect = _place(self.rng, occupied, size, (2, n - 2, 2, n - 2))
            if rect is not None:
                footprints.append(rect)
        decoys = []
        for d in range(spec.decoys_per_cell):
            side = int(self.rng.integers(hi, hi + 3))
            # alternate between the urban core and the rural edge band
            bounds = urban_rect if d % 2 == 0 else (2, q - 1, 2, n - 2)
            rect = _place(self.rng, occupied, (side, side), bounds)
            if rect is not None:
                decoys.append(rect)

        for m, rect in enumerate(footprints):
            self.buildings.polygons.append(_rect_polygon(cell, rect, res))
            self.buildings.ids.append(f"b{k:02d}-{m:03d}")

        cell_tf = GeoTransform(cell.bbox.min_lon, cell.bbox.max_lat, res, res)
        cell_buildings = PolygonSet([self.buildings.polygons[i] for i, pid in enumerate(self.buildings.ids)
                                     if pid.startswith(f"b{k:02d}-")],
                                    [pid for pid in self.buildings.ids if pid.startswith(f"b{k:02d}-")])
        reference = rasterize(cell_buildings, cell_tf, n, n)
        write_raster(reference, self.out / 'reference' / f"{cell.cell_id}.tif")

        decoy_mask = np.zeros((n, n), dtype=bool)
        for r0, c0, r1, c1 in decoys:
            decoy_mask[r0:r1, c0:c1] = True
        urban = np.zeros((n, n), dtype=bool)
        urban[q:3 * q, q:3 * q] = True

        size = n + 2 * SCENE_MARGIN
        grass = self._background(size)
        bright = np.zeros((size, size), dtype=bool)
        inner = slice(SCENE_MARGIN, SCENE_MARGIN + n)
        bright[inner, inner] = (reference.data[0] == 1) | decoy_mask

        lc = np.where(grass[inner, inner], int(LandCover.GRASS), int(LandCover.FOREST)).astype(np.uint8)
        lc[decoy_mask & urban] = int(LandCover.CROPLAND)
        lc[decoy_mask & ~urban] = int(LandCover.BARE)
        lc[reference.data[0] == 1] = int(LandCover.IMPERVIOUS)
        cols = slice(k * n, (k + 1) * n)
        self.landcover[:, cols] = lc
        self.urban[:, cols] = urban

        scene = self._scene(cell, grass, bright)
        year = 2018 if cloudy else 2019
        cloud, haze = (round(float(v), 1) for v in self.rng.uniform(0, 5, size=2))
        self.records.append(self._scene_record(f"S{year}_{cell.cell_id}", scene, cloud, haze, year,
                                               SURFACE_REFLECTANCE))
        if cloudy:
            decoy = RasterGrid(np.broadcast_to(np.array(CLOUD_DN, dtype=np.uint16)[:, None, None],
                                               scene.data.shape), scene.transform, SCENE_NODATA)
            self.records.append(self._scene_record(f"S2019_{cell.cell_id}_cloudy", decoy, 60.0, 5.0, 2019,
                                                   SURFACE_REFLECTANCE))
        self.records.append(self._scene_record(f"B2017_{cell.cell_id}", scene, 0.0, 0.0, 2017, BASEMAP))

        split = cell.bbox.min_lon + (n // 2) * res
        b = cell.bbox
        self.regions.polygons += [box(b.min_lon, b.min_lat, split, b.max_lat),
                                  box(split, b.min_lat, b.max_lon, b.max_lat)]
        self.regions.ids += [f"region-{k:02d}-w", f"region-{k:02d}-e"]

    # -- world layers ------------------------------------------------------

    def write_layers(self) -> None:
        write_raster(RasterGrid(self.urban, self.world_tf, None), self.out / 'urban.tif')
        write_raster(RasterGrid(self.landcover, self.world_tf, DEFAULT_NODATA['uint8']), self.out / 'landcover.tif')

        s_res = GRID_SIZE_DEG / SETTLEMENT_PER_CELL
        settlement = np.zeros((SETTLEMENT_PER_CELL, SETTLEMENT_PER_CELL * (self.spec.n_cells + 1)), dtype=np.uint8)
        half = SETTLEMENT_PER_CELL // 2
        for k in range(self.spec.n_cells):
            settlement[half, k * SETTLEMENT_PER_CELL + half] = 1
        s_tf = GeoTransform(self.extent.min_lon, self.extent.max_lat, s_res, s_res)
        write_raster(RasterGrid(settlement, s_tf, None), self.out / 'settlement.tif')

        width = round(self.extent.width / ATLAS_RES_DEG)
        height = round(self.extent.height / ATLAS_RES_DEG)
        atlas = np.full((height, width), PV_WEST, dtype=np.float32)
        atlas[:, width // 2:] = PV_EAST
        a_tf = GeoTransform(self.extent.min_lon, self.extent.max_lat, ATLAS_RES_DEG, ATLAS_RES_DEG)
        write_raster(RasterGrid(atlas, a_tf, DEFAULT_NODATA['float32']), self.out / 'pv_atlas.tif')

        write_manifest(self.records, self.out / 'manifest.csv')
        (self.out / 'buildings.geojson').write_text(json.dumps(self.buildings.to_geojson()) + '\n')
        (self.out / 'regions.geojson').write_text(json.dumps(self.regions.to_geojson('region_id')) + '\n')

        groups = pd.DataFrame([{'patch_id': c.cell_id, 'city': c.cell_id,
                                'continent': TileSpec.for_cell(c).tile_id} for c in self.cells])
        groups.to_csv(self.out / 'groups.csv', index=False)

    def write_socioeconomic(self) -> pd.DataFrame:
        res = self.res
        areas: Dict[str, float] = {}
        for k, cell in enumerate(self.cells):
            tf = GeoTransform(cell.bbox.min_lon, cell.bbox.max_lat, res, res)
            ids = [pid for pid in self.regions.ids if pid.startswith(f"region-{k:02d}-")]
            regions = PolygonSet([self.regions.polygons[self.regions.ids.index(pid)] for pid in ids], ids)
            reference = rasterize(
                PolygonSet([p for pid, p in self.buildings if pid.startswith(f"b{k:02d}-")],
                           [pid for pid in self.buildings.ids if pid.startswith(f"b{k:02d}-")]),
                tf, self.spec.cell_pixels, self.spec.cell_pixels)
            for s in zonal_building_area(reference, regions):
                if s.region_id in ids:
                    areas[s.region_id] = s.building_area_m2
        region_ids = sorted(areas)
        x = np.array([areas[r] for r in region_ids])
        table = {'region_id': region_ids}
        for col in SOCIO_COLUMNS:
            clean = SOCIO_SLOPES[col] * x
            sd = SOCIO_NOISE * float(clean.mean()) if clean.size else 0.0
            table[col] = clean + self.rng.normal(0.0, sd, size=clean.shape) if sd > 0 else clean
        df = pd.DataFrame(table)
        df.to_csv(self.out / 'socioeconomic.csv', index=False)
        return df

    def write_config(self) -> dict:
        config = {
            'seed': self.spec.seed,
            'resolution_deg': self.res,
            'vote_threshold': 2,
            'segmenters': ['baseline'] * 4,
            'calibration_mode': 'per-scope',
            'inputs': {
                'manifest': 'manifest.csv',
                'settlement': 'settlement.tif',
                'landcover': 'landcover.tif',
                'urban': 'urban.tif',
                'pv_atlas': 'pv_atlas.tif',
                'regions': 'regions.geojson',
                'socioeconomic': 'socioeconomic.csv',
                'reference': 'buildings.geojson',
            },
            'out_dir': 'out',
        }
        (self.out / 'config.json').write_text(json.dumps(config, indent=2, sort_keys=True) + '\n')
        return config

    def build(self) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        n_cloudy = round(self.spec.cloud_scene_fraction * self.spec.n_cells)
        cloudy = set(self.rng.permutation(self.spec.n_cells)[:n_cloudy].tolist())
        for k, cell in enumerate(self.cells):
            self.build_cell(k, cell, k in cloudy)
        self.write_layers()
        self.write_socioeconomic()
        self.write_config()
        world = {
            'spec': {**asdict(self.spec), 'building_size_range': list(self.spec.building_size_range)},
            'resolution_deg': self.res,
            'cells': [c.cell_id for c in self.cells],
            'cloudy_cells': sorted(self.cells[k].cell_id for k in cloudy),
            'n_buildings': len(self.buildings),
            'files': {
                'scenes': sorted(f"scenes/{r.scene_id}.tif" for r in self.records),
                'manifest': 'manifest.csv',
                'settlement': 'settlement.tif',
                'urban': 'urban.tif',
                'landcover': 'landcover.tif',
                'pv_atlas': 'pv_atlas.tif',
                'buildings': 'buildings.geojson',
                'regions': 'regions.geojson',
                'reference': sorted(f"reference/{c.cell_id}.tif" for c in self.cells),
                'groups': 'groups.csv',
                'socioeconomic': 'socioeconomic.csv',
                'config': 'config.json',
            },
        }
        (self.out / 'world.json').write_text(json.dumps(world, indent=2, sort_keys=True) + '\n')
        logger.info(f"Generated {self.spec.n_cells} cell(s) with {len(self.buildings)} building(s) in {self.out}")
        return world


def generate_world(spec: SyntheticWorldSpec, out_dir: Union[str, Path]) -> dict:
    return WorldBuilder(spec, out_dir).build()
