"""Rasterization, signed distance and distance-class binning."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ensemble import binarize
from labelgen import (InvalidPolygonError, LabelError, PolygonSet, UnclosedRingError, distance_labels,
                      rasterize, signed_distance, truncate_and_bin)
from raster_core import GeoTransform, RasterGrid

from .conftest import FRAME, mask_raster, oracle_signed_distance, square


# ---------------------------------------------------------------------------
# Polygons and rasterization
# ---------------------------------------------------------------------------

def test_empty_polygon_set_rasterizes_to_zeros():
    out = rasterize(PolygonSet(), FRAME, 8, 8)
    assert out.dtype == "uint8"
    assert not out.data.any()


def test_square_covers_nine_pixel_centres():
    p = PolygonSet.from_rings([[square(2, 3, 5, 6)]])
    out = rasterize(p, FRAME, 8, 8).data[0]
    assert out.sum() == 9
    assert out[2:5, 2:5].all()


def test_hole_over_centre_pixel_leaves_eight():
    p = PolygonSet.from_rings([[square(2, 3, 5, 6), square(3.2, 4.2, 3.8, 4.8)]])
    out = rasterize(p, FRAME, 8, 8).data[0]
    assert out.sum() == 8
    assert out[3, 3] == 0


def test_polygon_outside_frame():
    p = PolygonSet.from_rings([[square(20, 20, 22, 22)]])
    assert not rasterize(p, FRAME, 8, 8).data.any()


@st.composite
def disjoint_rectangles(draw):
    """Up to four rectangles, each inside its own 6x6 quadrant of a 12x12 frame."""
    rects = []
    for qx, qy in draw(st.sets(st.sampled_from([(0, 0), (0, 1), (1, 0), (1, 1)]), min_size=1)):
        x0 = draw(st.floats(6 * qx, 6 * qx + 5.5))
        x1 = draw(st.floats(x0 + 0.1, 6 * qx + 6))
        y0 = draw(st.floats(6 * qy, 6 * qy + 5.5))
        y1 = draw(st.floats(y0 + 0.1, 6 * qy + 6))
        rects.append(square(x0, y0, x1, y1))
    return rects


@given(disjoint_rectangles())
def test_disjoint_union_rasterizes_to_or_of_parts(rects):
    frame = GeoTransform(0.0, 12.0, 1.0, 1.0)
    whole = rasterize(PolygonSet.from_rings([[r] for r in rects]), frame, 12, 12).data[0]
    parts = [rasterize(PolygonSet.from_rings([[r]]), frame, 12, 12).data[0] for r in rects]
    np.testing.assert_array_equal(whole, np.bitwise_or.reduce(parts))
    assert int(whole.sum()) == sum(int(p.sum()) for p in parts)


def test_unclosed_ring():
    with pytest.raises(UnclosedRingError):
        PolygonSet.from_rings([[[(0, 0), (1, 0), (1, 1), (0, 1)]]])


def test_self_intersecting_polygon_fails_validation():
    bowtie = [(0, 0), (2, 2), (2, 0), (0, 2), (0, 0)]
    with pytest.raises(InvalidPolygonError):
        PolygonSet.from_rings([[bowtie]]).validate()


def test_geojson_multipolygon_parts_share_id():
    doc = {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "properties": {"id": "b1"},
             "geometry": {"type": "MultiPolygon",
                          "coordinates": [[square(0, 0, 1, 1)], [square(3, 3, 4, 4)]]}},
            {"type": "Feature", "properties": {"id": "b2"},
             "geometry": {"type": "Polygon", "coordinates": [square(5, 5, 6, 6)]}},
        ],
    }
    p = PolygonSet.from_geojson(doc)
    assert p.ids == ["b1", "b1", "b2"]
    grouped = p.by_id()
    assert grouped["b1"].geom_type == "MultiPolygon"
    assert PolygonSet.from_geojson(p.to_geojson()).ids == p.ids


def test_geojson_rejects_points(tmp_path):
    path = tmp_path / "pts.geojson"
    path.write_text('{"type": "FeatureCollection", "features": [{"type": "Feature", "properties": {},'
                    ' "geometry": {"type": "Point", "coordinates": [0, 0]}}]}')
    with pytest.raises(LabelError):
        PolygonSet.from_geojson(path)


# ---------------------------------------------------------------------------
# Signed distance
# ---------------------------------------------------------------------------

def _block_mask():
    m = np.zeros((8, 8), dtype=np.uint8)
    m[3:6, 3:6] = 1
    return m


def test_block_distances():
    d = signed_distance(mask_raster(_block_mask())).data[0]
    assert d[4, 4] == 2.0
    assert d[3, 3] == 1.0
    assert d[0, 0] == pytest.approx(-math.sqrt(18), rel=1e-6)
    assert d[2, 3] == -1.0


def test_all_zero_mask_saturates_negative():
    d = signed_distance(mask_raster(np.zeros((4, 6)))).data[0]
    assert np.all(d == -10.0)


def test_all_one_mask_saturates_positive():
    d = signed_distance(mask_raster(np.ones((4, 6)))).data[0]
    assert np.all(d == 10.0)


@given(arrays(np.uint8, st.tuples(st.integers(1, 16), st.integers(1, 16)), elements=st.integers(0, 1)))
def test_signed_distance_matches_oracle_on_small_masks(mask):
    got = signed_distance(mask_raster(mask)).data[0]
    np.testing.assert_array_equal(got, oracle_signed_distance(mask))


@pytest.mark.slow
def test_signed_distance_matches_oracle_up_to_64():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        h, w = (int(v) for v in rng.integers(1, 65, size=2))
        mask = (rng.random((h, w)) < rng.uniform(0.05, 0.6)).astype(np.uint8)
        got = signed_distance(mask_raster(mask)).data[0]
        np.testing.assert_array_equal(got, oracle_signed_distance(mask))
        labels = truncate_and_bin(RasterGrid(got, FRAME))
        np.testing.assert_array_equal(binarize(labels).data[0], mask)


# ---------------------------------------------------------------------------
# Binning
# ---------------------------------------------------------------------------

def test_binning_examples():
    d = np.array([[2.0, 1.0, -4.243, 0.0, 10.0, -10.0, 25.0, -1.0]], dtype=np.float32)
    labels = truncate_and_bin(RasterGrid(d, FRAME)).data[0, 0]
    assert labels.tolist() == [6, 6, 2, 5, 10, 0, 10, 4]


def test_binning_range_and_sign():
    d = np.linspace(-30, 30, 121, dtype=np.float32).reshape(1, -1)
    labels = truncate_and_bin(RasterGrid(d, FRAME)).data[0, 0]
    assert labels.min() == 0 and labels.max() == 10
    np.testing.assert_array_equal(labels > 5, d[0] > 0)


def test_binning_keeps_nodata():
    d = np.array([[3.0, -9999.0]], dtype=np.float32)
    labels = truncate_and_bin(RasterGrid(d, FRAME, -9999.0))
    assert labels.nodata == 255
    assert labels.data[0, 0].tolist() == [7, 255]


def test_beta_must_be_positive():
    with pytest.raises(LabelError):
        truncate_and_bin(RasterGrid(np.zeros((1, 1), dtype=np.float32), FRAME), beta=0)


@given(arrays(np.uint8, st.tuples(st.integers(1, 24), st.integers(1, 24)), elements=st.integers(0, 1)))
def test_binarized_labels_reproduce_mask(mask):
    labels = distance_labels(mask_raster(mask))
    np.testing.assert_array_equal(binarize(labels).data[0], mask)
