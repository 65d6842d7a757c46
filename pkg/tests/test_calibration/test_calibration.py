"""IQR clipping statistics and 0-1 scaling."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from calibration import (CALIBRATED_NODATA, BandStats, CalibrationError, CalibrationMode, band_quantiles,
                         calibrate, calibrate_bands, stats_summary)
from raster_core import GeoTransform, RasterGrid

T = GeoTransform(10.0, 45.2, 0.001, 0.001)


def _raster(values, nodata=None, dtype=np.uint16):
    return RasterGrid(np.asarray(values, dtype=dtype), T, nodata)


def _oracle_quantile(values, p):
    """Brute-force type-7 quantile: sort, then interpolate at rank (n-1)p."""
    xs = sorted(float(v) for v in values)
    h = (len(xs) - 1) * p
    f = int(h)
    if f + 1 >= len(xs):
        return xs[-1]
    return xs[f] + (h - f) * (xs[f + 1] - xs[f])


# ---------------------------------------------------------------------------
# Quantiles
# ---------------------------------------------------------------------------

def test_one_to_ten_quantiles():
    stats = band_quantiles(np.arange(1, 11))
    assert stats.q1 == 3.25
    assert stats.q3 == 7.75
    assert stats.iqr == 4.5
    assert stats.clip_hi == 14.5
    assert stats.clip_lo == 0.0


def test_constant_samples():
    stats = band_quantiles(np.full(17, 42.0))
    assert stats.q1 == stats.q3 == 42.0
    assert stats.iqr == 0.0
    assert stats.clip_hi == 42.0


def test_single_sample():
    stats = band_quantiles([7])
    assert (stats.q1, stats.q3) == (7.0, 7.0)


def test_nodata_and_nan_are_excluded():
    stats = band_quantiles(np.array([1, 2, 3, 4, 5, 65535], dtype=np.uint16), nodata=65535)
    assert stats == band_quantiles([1, 2, 3, 4, 5])
    stats = band_quantiles(np.array([np.nan, 1.0, 2.0, np.inf], dtype=np.float32))
    assert stats == band_quantiles([1.0, 2.0])


def test_all_nodata_is_an_error():
    with pytest.raises(CalibrationError):
        band_quantiles(np.full(4, 65535, dtype=np.uint16), nodata=65535)


def test_band_stats_reject_inverted_quartiles():
    with pytest.raises(CalibrationError):
        BandStats(q1=2.0, q3=1.0)


@pytest.mark.slow
def test_quantiles_match_sorted_oracle_on_random_arrays():
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        n = int(rng.integers(1, 60))
        values = rng.normal(1000.0, 300.0, size=n)
        stats = band_quantiles(values)
        assert stats.q1 == pytest.approx(_oracle_quantile(values, 0.25), rel=1e-12, abs=1e-12)
        assert stats.q3 == pytest.approx(_oracle_quantile(values, 0.75), rel=1e-12, abs=1e-12)


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e6, 1e6)))
def test_quantiles_match_numpy_linear_method(values):
    stats = band_quantiles(values)
    assert stats.q1 == pytest.approx(float(np.quantile(values, 0.25)), rel=1e-12, abs=1e-9)
    assert stats.q3 == pytest.approx(float(np.quantile(values, 0.75)), rel=1e-12, abs=1e-9)


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

def test_one_to_ten_band_scales_without_clipping():
    out = calibrate(_raster(np.arange(1, 11).reshape(2, 5)))
    assert out.dtype == "float32"
    assert out.nodata is None
    assert float(out.data.max()) == pytest.approx(10 / 14.5, rel=1e-6)
    assert float(out.data.max()) < 1.0


def test_outlier_is_clipped_to_exactly_one():
    values = np.append(np.arange(1, 101), 10 ** 6).astype(np.float32)
    out = calibrate(_raster(values.reshape(1, -1), dtype=np.float32)).data[0, 0]
    assert out[-1] == 1.0
    bulk = out[:-1]
    assert np.all(np.diff(bulk) > 0)
    assert bulk.max() < 1.0


def test_all_zero_band_stays_zero():
    out = calibrate(_raster(np.zeros((3, 3))))
    assert not out.data.any()


def test_nodata_pixels_become_calibrated_nodata():
    values = np.array([[1, 2, 65535], [4, 5, 6]])
    out = calibrate(_raster(values, nodata=65535))
    assert out.nodata == CALIBRATED_NODATA
    assert out.data[0, 0, 2] == CALIBRATED_NODATA
    assert out.pixel_valid().sum() == 5


@given(arrays(np.uint16, st.tuples(st.integers(1, 4), st.integers(1, 20), st.integers(1, 20))))
def test_outputs_lie_in_unit_interval(values):
    out = calibrate(_raster(values))
    assert float(out.data.min()) >= 0.0
    assert float(out.data.max()) <= 1.0


@given(arrays(np.uint16, st.tuples(st.integers(1, 3), st.integers(1, 16), st.integers(1, 16))))
def test_scaling_is_monotonic_and_only_clips_the_upper_tail(values):
    out, applied = calibrate_bands(_raster(values))
    for b, stats in enumerate(applied['bands']):
        v = values[b].astype(np.float64).ravel()
        got = out.data[b].ravel()
        assert np.all(np.diff(got[np.argsort(v, kind='stable')]) >= 0)
        hi = stats.clip_hi
        if hi <= 0:
            assert not got.any()
            continue
        below = v <= hi
        np.testing.assert_array_equal(got[below], (v[below] / hi).astype(np.float32))
        assert np.all(got[~below] == 1.0)


def test_band_statistics_are_independent():
    data = np.stack([np.arange(1, 11).reshape(2, 5), 100 * np.arange(1, 11).reshape(2, 5)])
    out = calibrate(_raster(data))
    np.testing.assert_allclose(out.data[0], out.data[1], rtol=1e-6)


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------

def test_mode_parsing():
    assert CalibrationMode.parse("PER-PATCH") is CalibrationMode.PER_PATCH
    assert CalibrationMode.parse(CalibrationMode.PER_SCOPE) is CalibrationMode.PER_SCOPE
    with pytest.raises(CalibrationError):
        CalibrationMode.parse("per-city")


def test_per_patch_uses_local_statistics():
    data = np.zeros((4, 4))
    data[:2, :2] = 1
    data[:2, 2:] = 100
    data[2:, :] = np.arange(1, 9).reshape(2, 4)
    out, applied = calibrate_bands(_raster(data), CalibrationMode.PER_PATCH, patch_size=2)
    # constant patches scale to exactly 1.0 whatever their level
    assert np.all(out.data[0, :2, :] == 1.0)
    assert set(applied["patches"]) == {(0, 0), (0, 2), (2, 0), (2, 2)}


def test_per_scope_differs_from_per_patch():
    data = np.zeros((4, 4))
    data[:2, :2] = 1
    data[:2, 2:] = 100
    data[2:, :] = 50
    scope = calibrate(_raster(data), "per-scope")
    patch = calibrate(_raster(data), "per-patch", patch_size=2)
    assert scope.data[0, 0, 0] < 1.0
    assert patch.data[0, 0, 0] == 1.0


def test_per_patch_all_nodata_patch_is_left_nodata():
    data = np.full((4, 4), 65535)
    data[:, :2] = 3
    out, applied = calibrate_bands(_raster(data, nodata=65535), CalibrationMode.PER_PATCH, patch_size=2)
    assert applied["patches"][(0, 2)] == [None]
    assert np.all(out.data[0, :, 2:] == CALIBRATED_NODATA)
    assert np.all(out.data[0, :, :2] == 1.0)


def test_per_scope_all_nodata_band_is_an_error():
    data = np.full((2, 2, 2), 65535)
    data[0] = 5
    with pytest.raises(CalibrationError):
        calibrate(_raster(data, nodata=65535))


def test_non_positive_patch_size():
    with pytest.raises(CalibrationError):
        calibrate(_raster(np.ones((2, 2))), "per-patch", patch_size=0)


def test_stats_summary_is_json_ready():
    _, applied = calibrate_bands(_raster(np.arange(1, 11).reshape(2, 5)))
    summary = json.loads(json.dumps(stats_summary(applied)))
    assert summary["mode"] == "per-scope"
    assert summary["bands"][0]["clip_hi"] == 14.5

    _, applied = calibrate_bands(_raster(np.ones((4, 4))), "per-patch", patch_size=2)
    summary = json.loads(json.dumps(stats_summary(applied)))
    assert [(p["row"], p["col"]) for p in summary["patches"]] == [(0, 0), (0, 2), (2, 0), (2, 2)]
