"""Frames, footprints and the brute-force distance oracle."""

import numpy as np

from raster_core import GeoTransform, RasterGrid

# 1 degree pixels with the top-left corner at (0, 8): pixel (r, c) centre is (c + .5, 7.5 - r)
FRAME = GeoTransform(0.0, 8.0, 1.0, 1.0)


def square(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]


def mask_raster(mask, transform=FRAME):
    return RasterGrid(np.asarray(mask, dtype=np.uint8), transform, None)


def oracle_signed_distance(mask):
    """All-pairs distance from every pixel centre to the nearest centre of the other class."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    if mask.all() or not mask.any():
        return np.full(mask.shape, (w + h) if mask.all() else -(w + h), dtype=np.float32)
    rows, cols = np.indices(mask.shape)
    points = np.stack([rows.ravel(), cols.ravel()], axis=1)
    flat = mask.ravel()
    out = np.empty(flat.size, dtype=np.float64)
    for cls, sign in ((True, 1.0), (False, -1.0)):
        src = points[flat == cls]
        other = points[flat != cls]
        best = np.empty(len(src), dtype=np.int64)
        for start in range(0, len(src), 256):
            chunk = src[start:start + 256]
            diff = chunk[:, None, :] - other[None, :, :]
            best[start:start + 256] = (diff ** 2).sum(axis=2).min(axis=1)
        out[flat == cls] = sign * np.sqrt(best)
    return out.reshape(mask.shape).astype(np.float32)
