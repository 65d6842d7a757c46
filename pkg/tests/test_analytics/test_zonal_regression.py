"""Zonal footprint area and socioeconomic regression."""

import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from analytics import (UNASSIGNED, AnalyticsError, RegionStats, RegressionError, attach_socioeconomic,
                       building_area, read_socioeconomic_csv, regress, regress_table, zonal_building_area,
                       zonal_table)
from labelgen import PolygonSet

from .conftest import RES_3M, buildings


def box(west, south, east, north):
    return [[(west, south), (east, south), (east, north), (west, north), (west, south)]]


def regions(boxes, ids):
    return PolygonSet.from_rings([box(*b) for b in boxes], ids)


@pytest.fixture
def full():
    return buildings(np.ones((20, 20)))


# ---------------------------------------------------------------------------
# Zonal area
# ---------------------------------------------------------------------------

def test_single_covering_region_gets_everything(full):
    stats = zonal_building_area(full, regions([(-1, -1, 1, 1)], ['all']))
    assert [s.region_id for s in stats] == ['all', UNASSIGNED]
    assert stats[0].building_area_m2 == building_area(full)
    assert stats[1].building_area_m2 == 0.0


def test_halves_are_equal(full):
    mid = 10 * RES_3M
    stats = zonal_building_area(full, regions([(mid, -1, 1, 1), (-1, -1, mid, 1)], ['east', 'west']))
    by_id = {s.region_id: s.building_area_m2 for s in stats}
    assert by_id['east'] == by_id['west']
    assert by_id['east'] + by_id['west'] == building_area(full)


def test_disjoint_region_is_zero(full):
    stats = zonal_building_area(full, regions([(5, 5, 6, 6)], ['far']))
    assert stats[0].building_area_m2 == 0.0
    assert stats[1].building_area_m2 == building_area(full)


def test_overlaps_are_counted_once_and_conserved():
    mask = np.random.default_rng(3).random((30, 30)) < 0.4
    r = buildings(mask)
    a = 12 * RES_3M
    b = 20 * RES_3M
    stats = zonal_building_area(r, regions([(-1, -1, b, 1), (a, -1, 1, 1), (0, 0, a, 1)], ['b', 'a', 'c']))
    assert [s.region_id for s in stats] == ['a', 'b', 'c', UNASSIGNED]
    assert sum(s.building_area_m2 for s in stats) == building_area(r)


def test_invalid_region_rejected(full):
    bowtie = [[(0, 0), (1, 1), (1, 0), (0, 1), (0, 0)]]
    with pytest.raises(ValueError):
        zonal_building_area(full, PolygonSet.from_rings([bowtie], ['x']))


def test_negative_area_rejected():
    with pytest.raises(AnalyticsError):
        RegionStats('r', -1.0)


# ---------------------------------------------------------------------------
# Socioeconomic table
# ---------------------------------------------------------------------------

def write_csv(path, text):
    path.write_text(text)
    return path


def test_read_and_attach(tmp_path):
    table = read_socioeconomic_csv(write_csv(tmp_path / 's.csv', "region_id,population,gdp\nr1,10,\nr2,20,5\n"))
    stats = [RegionStats('r1', 1.0), RegionStats('r2', 2.0), RegionStats('r3', 3.0), RegionStats(UNASSIGNED, 4.0)]
    attached = attach_socioeconomic(stats, table)
    assert [s.region_id for s in attached] == ['r1', 'r2', 'r3']
    assert attached[0].values == {'population': 10.0, 'gdp': None}
    assert attached[2].values == {}
    df = zonal_table(attached)
    assert list(df.columns[:2]) == ['region_id', 'building_area_m2']


@pytest.mark.parametrize('text', [
    "population\n1\n",
    "region_id,shoe_size\nr1,9\n",
    "region_id,gdp\nr1,1\nr1,2\n",
])
def test_bad_socioeconomic_csv(tmp_path, text):
    with pytest.raises(AnalyticsError):
        read_socioeconomic_csv(write_csv(tmp_path / 's.csv', text))


# ---------------------------------------------------------------------------
# Regression
# ---------------------------------------------------------------------------

def test_perfect_line():
    res = regress([1, 2, 3, 4], [2, 4, 6, 8])
    assert res.rho == pytest.approx(1.0)
    assert res.slope == pytest.approx(2.0)
    assert res.intercept == pytest.approx(0.0, abs=1e-12)
    assert res.n == 4


def test_partial_correlation():
    assert regress([1, 2, 3], [1, 3, 2]).rho == pytest.approx(0.5)


def test_missing_y_dropped():
    res = regress([1, 2, 3, 4], [2, None, 6, float('nan')])
    assert res.n == 2
    assert res.slope == pytest.approx(2.0)


@pytest.mark.parametrize('x, y', [
    ([1], [1]),
    ([2, 2, 2], [1, 2, 3]),
    ([1, 2], [1]),
])
def test_regression_errors(x, y):
    with pytest.raises(RegressionError):
        regress(x, y)


def test_constant_y_has_undefined_rho():
    res = regress([1, 2, 3], [0.1, 0.1, 0.1])
    assert res.rho is None
    assert (res.slope, res.intercept, res.n) == (0.0, 0.1, 3)


@given(st.lists(st.tuples(st.integers(0, 10_000), st.integers(-10_000, 10_000)), min_size=3, max_size=30),
       st.floats(0.01, 100), st.floats(-1e4, 1e4), st.floats(0.01, 100), st.floats(-1e4, 1e4))
def test_rho_survives_positive_affine_rescaling(pairs, ax, bx, ay, by):
    xs = [float(p[0]) for p in pairs]
    ys = [float(p[1]) for p in pairs]
    assume(min(xs) < max(xs) and min(ys) < max(ys))
    base = regress(xs, ys)
    scaled = regress([ax * x + bx for x in xs], [ay * y + by for y in ys])
    assert scaled.rho == pytest.approx(base.rho, abs=1e-6)
    spread = float(np.std(ys) / np.std(xs))
    assert scaled.slope * ax / ay == pytest.approx(base.slope, rel=1e-6, abs=1e-6 * spread)


def test_regress_table_raw_and_log():
    stats = [RegionStats(str(k), 10.0 ** k, {'population': 3 * 10.0 ** k, 'gdp': 7.0}) for k in range(1, 5)]
    stats.append(RegionStats(UNASSIGNED, 1e9, {'population': 1.0}))
    raw = regress_table(stats, ['population', 'gdp'])
    assert list(raw.columns) == ['variable', 'slope', 'intercept', 'rho', 'n']
    assert raw['variable'].tolist() == ['population', 'gdp']
    # gdp is the same everywhere: flat line, no correlation
    assert raw.loc[1, 'slope'] == 0.0
    assert raw.loc[1, 'intercept'] == 7.0
    assert pd.isna(raw.loc[1, 'rho'])
    assert raw.loc[0, 'slope'] == pytest.approx(3.0)
    log = regress_table(stats, ['population'], log=True)
    assert log.loc[0, 'slope'] == pytest.approx(1.0)
    assert log.loc[0, 'intercept'] == pytest.approx(np.log10(3.0))
    assert log.loc[0, 'n'] == 4


def test_regress_table_empty():
    assert isinstance(regress_table([], ['population']), pd.DataFrame)
    assert regress_table([], ['population']).empty
