"""On-disk inputs for command-line tests."""

import json

import numpy as np

from raster_core import GeoTransform, RasterGrid, write_raster

RES = 0.001
T = GeoTransform(10.0, 45.016, RES, RES)


def scene(path, size=16, seed=0):
    """4-band uint16 scene with a bright low-NDVI square in the middle."""
    rng = np.random.default_rng(seed)
    data = np.empty((4, size, size), dtype=np.uint16)
    data[0] = rng.integers(0, 1000, (size, size))
    data[1:3] = 500
    data[3] = 5000
    lo, hi = size // 4, 3 * size // 4
    data[:, lo:hi, lo:hi] = 3000
    return write_raster(RasterGrid(data, T, 65535), path)


def mask(path, values):
    return write_raster(RasterGrid(np.asarray(values, dtype=np.uint8), T), path)


def square_geojson(path, size=16):
    lo, hi = size // 4, 3 * size // 4
    west, east = T.origin_lon + lo * RES, T.origin_lon + hi * RES
    north, south = T.origin_lat - lo * RES, T.origin_lat - hi * RES
    ring = [[west, south], [east, south], [east, north], [west, north], [west, south]]
    doc = {'type': 'FeatureCollection', 'features': [
        {'type': 'Feature', 'properties': {'id': 'b1', 'region_id': 'r1'},
         'geometry': {'type': 'Polygon', 'coordinates': [ring]}}]}
    path.write_text(json.dumps(doc))
    return path
