"""Cell selection, scene queries and the scene manifest."""

import numpy as np
import pandas as pd
import pytest

from pipeline_manager import (CellSkipped, ConfigError, ManifestError, QueryRules, coverage, read_manifest,
                              select_cells, select_scenes, summarize_manifest, write_manifest)
from raster_core import GeoBox, GeoTransform, GridCell, RasterGrid

from .conftest import CELL, basemap, scene


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

def settlement(values, origin=(0.0, 0.4), res=0.05, nodata=None):
    return RasterGrid(np.asarray(values, dtype=np.uint8), GeoTransform(origin[0], origin[1], res, res), nodata)


def test_one_cell_per_built_region():
    mask = np.zeros((8, 8))
    mask[0, 0] = 1      # cell (1, 0)
    mask[1, 3] = 1      # same cell
    mask[7, 7] = 1      # cell (0, 1)
    assert select_cells(settlement(mask)) == [GridCell(0, 1), GridCell(1, 0)]


def test_no_built_pixels_selects_nothing():
    assert select_cells(settlement(np.zeros((4, 4)))) == []


def test_settlement_nodata_is_not_built():
    mask = np.full((4, 4), 255)
    assert select_cells(settlement(mask, nodata=255)) == []


def test_cells_south_and_west_of_origin():
    mask = np.ones((1, 1))
    assert select_cells(settlement(mask, origin=(-0.05, 0.0))) == [GridCell(-1, -1)]


# ---------------------------------------------------------------------------
# Scene queries
# ---------------------------------------------------------------------------

def test_clean_preferred_year():
    chosen = select_scenes([scene('a', 2019), scene('old', 2018)], CELL)
    assert [s.scene_id for s in chosen] == ['a']


def test_cloudy_preferred_year_falls_back():
    chosen = select_scenes([scene('cloudy', 2019, cloud=15.0), scene('b', 2018)], CELL)
    assert [s.scene_id for s in chosen] == ['b']


def test_partial_coverage_adds_fallback_year_most_recent_first():
    west = GeoBox(-0.01, -0.01, 0.1, 0.21)
    east = GeoBox(0.1, -0.01, 0.21, 0.21)
    chosen = select_scenes([scene('e18', 2018, footprint=east), scene('w19', 2019, footprint=west)], CELL)
    assert [s.scene_id for s in chosen] == ['w19', 'e18']


def test_basemap_when_nothing_clean():
    chosen = select_scenes([scene('cloudy', 2019, cloud=50.0), basemap('base')], CELL)
    assert [s.scene_id for s in chosen] == ['base']


def test_basemap_appended_to_incomplete_coverage():
    half = GeoBox(-0.01, -0.01, 0.1, 0.21)
    chosen = select_scenes([scene('w19', 2019, footprint=half), basemap('base')], CELL)
    assert [s.scene_id for s in chosen] == ['w19', 'base']


def test_no_scene_skips_cell():
    with pytest.raises(CellSkipped):
        select_scenes([scene('far', 2019, footprint=GeoBox(5.0, 5.0, 6.0, 6.0))], CELL)
    with pytest.raises(CellSkipped):
        select_scenes([], CELL)


def test_sum_rule():
    s = scene('s', 2019, cloud=6.0, haze=6.0)
    assert QueryRules().passes(s)
    assert not QueryRules(cloud_haze_rule='sum').passes(s)


def test_thresholds_are_strict():
    assert not QueryRules().passes(scene('edge', 2019, cloud=10.0))


def test_recency_then_cloud_ordering():
    west = GeoBox(-0.01, -0.01, 0.1, 0.21)
    chosen = select_scenes([scene('b', 2019, cloud=3.0, footprint=west),
                            scene('a', 2019, cloud=5.0, footprint=west),
                            basemap('base')], CELL)
    assert [s.scene_id for s in chosen] == ['b', 'a', 'base']


def test_invalid_rules():
    with pytest.raises(ConfigError):
        QueryRules(cloud_haze_rule='max')
    with pytest.raises(ConfigError):
        QueryRules(coverage_threshold=0.0)


def test_coverage_union():
    west = GeoBox(-1.0, -1.0, 0.1, 1.0)
    assert coverage([scene('w', 2019, footprint=west)], CELL) == pytest.approx(0.5)
    assert coverage([scene('w', 2019, footprint=west), scene('w2', 2019, footprint=west)], CELL) == pytest.approx(0.5)
    assert coverage([], CELL) == 0.0


def test_scene_record_validation():
    with pytest.raises(ValueError):
        scene('bad', 2019, cloud=120.0)
    with pytest.raises(ValueError):
        scene('bad', 2019, kind='mosaic')


# ---------------------------------------------------------------------------
# Manifest files
# ---------------------------------------------------------------------------

def test_manifest_round_trip_resolves_relative_paths(tmp_path):
    records = [scene('a', 2019), basemap('base')]
    path = write_manifest(records, tmp_path / 'm' / 'manifest.csv')
    loaded = read_manifest(path)
    assert [r.scene_id for r in loaded] == ['a', 'base']
    assert loaded[0].path == str(tmp_path / 'm' / 'scenes' / 'a.tif')
    assert loaded[1].footprint == records[1].footprint


def test_manifest_missing_columns(tmp_path):
    path = tmp_path / 'manifest.csv'
    path.write_text("scene_id,year\na,2019\n")
    with pytest.raises(ManifestError, match="missing manifest column"):
        read_manifest(path)


@pytest.mark.parametrize('field,value', [('cloud_pct', 'cloudy'), ('cloud_pct', 140.0), ('year', ''),
                                         ('kind', 'mosaic'), ('min_lon', 1.0)])
def test_manifest_bad_values_name_the_line(tmp_path, field, value):
    rows = [scene('a', 2019).to_row(), scene('b', 2019).to_row()]
    rows[1][field] = value
    path = tmp_path / 'manifest.csv'
    pd.DataFrame(rows).to_csv(path, index=False)
    with pytest.raises(ManifestError, match="line 3"):
        read_manifest(path)


def test_empty_manifest_file(tmp_path):
    path = tmp_path / 'manifest.csv'
    path.write_text("")
    with pytest.raises(ManifestError):
        read_manifest(path)


def test_summarize_manifest():
    records = [scene('a', 2019, cloud=2.0), scene('b', 2019, cloud=4.0), scene('c', 2018), basemap('base')]
    summary = summarize_manifest(records)
    assert summary[['kind', 'year']].values.tolist() == [
        ['surface-reflectance', 2019], ['surface-reflectance', 2018], ['basemap', 2017]]
    assert summary['n_scenes'].tolist() == [2, 1, 1]
    assert summary.loc[0, 'mean_cloud_pct'] == pytest.approx(3.0)
    assert summarize_manifest([]).empty
