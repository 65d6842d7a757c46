"""Synthetic imagery for coregistration tests."""

import numpy as np

from raster_core import GeoTransform, RasterGrid

T = GeoTransform(10.0, 45.2, 0.001, 0.001)

# (row, col, height, width) of bright roofs, kept well away from the borders
ROOFS = [(12, 14, 9, 6), (30, 36, 7, 11), (44, 16, 8, 8)]


def one_band(values, nodata=None):
    return RasterGrid(np.asarray(values, dtype=np.float32), T, nodata)


def textured(seed, size=48):
    rng = np.random.default_rng(seed)
    return one_band(rng.uniform(0.0, 1000.0, size=(size, size)))


def roof_mask(size=64, offset=(0, 0)):
    dx, dy = offset
    mask = np.zeros((size, size), dtype=np.uint8)
    for row, col, h, w in ROOFS:
        mask[row + dy:row + dy + h, col + dx:col + dx + w] = 1
    return RasterGrid(mask, T, None)


def roof_image(size=64):
    """Three-band image: roofs at 1000, ground at 100."""
    values = 100.0 + 900.0 * roof_mask(size).data[0].astype(np.float32)
    return RasterGrid(np.stack([values, values, values]).astype(np.float32), T, None)
