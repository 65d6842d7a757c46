"""Building rasters at a 3 m equivalent resolution."""

import numpy as np

from raster_core import GeoTransform, RasterGrid

RES_3M = 2.6949e-5


def buildings(mask, top_lat=None, left_lon=0.0, res=RES_3M, nodata=None):
    """uint8 building raster; by default centred on the equator."""
    mask = np.asarray(mask, dtype=np.uint8)
    if top_lat is None:
        top_lat = mask.shape[0] * res / 2
    return RasterGrid(mask, GeoTransform(left_lon, top_lat, res, res), nodata)
