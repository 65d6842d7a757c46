"""Scene records and configs for the pipeline tests."""

from pipeline_manager import BASEMAP, SURFACE_REFLECTANCE, SceneRecord
from raster_core import GeoBox, GridCell

CELL = GridCell(j=0, i=0)
FULL = GeoBox(-0.01, -0.01, 0.21, 0.21)

INPUTS = {'manifest': 'manifest.csv', 'settlement': 'settlement.tif',
          'landcover': 'landcover.tif', 'urban': 'urban.tif'}


def scene(scene_id, year, cloud=1.0, haze=1.0, footprint=FULL, kind=SURFACE_REFLECTANCE):
    return SceneRecord(scene_id, footprint, cloud, haze, year, kind, f"scenes/{scene_id}.tif")


def basemap(scene_id, year=2017, footprint=FULL):
    return scene(scene_id, year, 0.0, 0.0, footprint, BASEMAP)


def raw_config(**overrides):
    raw = {'inputs': dict(INPUTS)}
    raw.update(overrides)
    return raw


def small_world_spec(**overrides):
    """One 64 px cell with a handful of small buildings."""
    from fixtures_world import SyntheticWorldSpec

    kwargs = dict(n_cells=1, buildings_per_cell=2, building_size_range=(2, 4), cell_pixels=64,
                  decoys_per_cell=2)
    kwargs.update(overrides)
    return SyntheticWorldSpec(**kwargs)
