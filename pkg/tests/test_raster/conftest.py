"""Small raster builders shared by the raster-core tests."""

import numpy as np

from raster_core import GeoTransform, RasterGrid


def grid(values, origin=(0.0, 10.0), res=1.0, nodata=None, dtype=None):
    """RasterGrid at `res` degrees per pixel with its top-left corner at origin (lon, lat)."""
    arr = np.asarray(values, dtype=dtype)
    return RasterGrid(arr, GeoTransform(origin[0], origin[1], res, res), nodata)


def constant(value, height, width, origin=(0.0, 10.0), res=1.0, nodata=None, dtype='uint8'):
    return grid(np.full((height, width), value, dtype=dtype), origin, res, nodata)
