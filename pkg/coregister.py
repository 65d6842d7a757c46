"""
Integer-pixel coregistration of imagery against rasterized footprints.

Both sides are reduced to Sobel edge magnitude and compared by zero-normalised
cross-correlation over every integer offset in a square search window. The
offset with the highest correlation is the translation the mask must undergo
to line up with the image.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy import ndimage

from raster_core import DEFAULT_NODATA, RasterGrid, fill_value

logger = logging.getLogger(__name__)

GRAY_WEIGHTS = (0.299, 0.587, 0.114)
DEFAULT_SEARCH_WINDOW = 16
# A candidate offset is scored only when its valid overlap holds at least this
# many samples and at least half the valid pixels of the sparser edge map.
MIN_OVERLAP_SAMPLES = 16
EDGE_NODATA = DEFAULT_NODATA['float32']


class CoregistrationError(ValueError):
    pass


class DegenerateCorrelationError(CoregistrationError):
    pass


@dataclass(frozen=True)
class Shift:
    """dx > 0 moves the mask east, dy > 0 moves it south."""

    dx: int
    dy: int
    score: float = 0.0

    def negated(self) -> 'Shift':
        return Shift(-self.dx, -self.dy, self.score)

    def format(self) -> str:
        return f"{self.dx} {self.dy} {self.score:.6f}"

    @classmethod
    def parse(cls, text: str) -> 'Shift':
        parts = text.split()
        if len(parts) not in (2, 3):
            raise CoregistrationError(f"expected 'dx dy [score]', got {text!r}")
        return cls(int(parts[0]), int(parts[1]), float(parts[2]) if len(parts) == 3 else 0.0)


def to_grayscale(r: RasterGrid) -> RasterGrid:
    if r.bands < 3:
        raise CoregistrationError(f"grayscale needs at least 3 bands, got {r.bands}")
    rgb = r.data[:3].astype(np.float64)
    gray = (GRAY_WEIGHTS[0] * rgb[0] + GRAY_WEIGHTS[1] * rgb[1] + GRAY_WEIGHTS[2] * rgb[2]).astype(np.float32)
    invalid = r.invalid_mask()[:3].any(axis=0)
    nodata = None
    if r.nodata is not None or invalid.any():
        nodata = EDGE_NODATA
        gray[invalid] = nodata
    return RasterGrid(gray, r.transform, nodata)


def sobel_magnitude(r: RasterGrid) -> RasterGrid:
    """Gradient magnitude of a 1-band raster with replicate-padded borders.

    Pixels whose 3x3 neighbourhood touches nodata come out as nodata.
    """
    if r.bands != 1:
        raise CoregistrationError(f"sobel expects a single band, got {r.bands}")
    if r.height < 3 or r.width < 3:
        raise CoregistrationError(f"sobel needs at least 3x3 pixels, got {r.height}x{r.width}")

    invalid = r.invalid_mask()[0]
    values = np.where(invalid, 0.0, r.data[0].astype(np.float64))
    gx = ndimage.sobel(values, axis=1, mode='nearest')
    gy = ndimage.sobel(values, axis=0, mode='nearest')
    magnitude = np.hypot(gx, gy).astype(np.float32)

    nodata = None
    if invalid.any():
        nodata = EDGE_NODATA
        touched = ndimage.binary_dilation(invalid, structure=np.ones((3, 3), dtype=bool))
        magnitude[touched] = nodata
    elif r.nodata is not None:
        nodata = EDGE_NODATA
    return RasterGrid(magnitude, r.transform, nodata)


def _candidates(window: int) -> Iterator[Tuple[int, int]]:
    offsets = [(dx, dy) for dy in range(-window, window + 1) for dx in range(-window, window + 1)]
    offsets.sort(key=lambda s: (abs(s[0]) + abs(s[1]), s[1], s[0]))
    return iter(offsets)


def _overlap(dx: int, dy: int, height: int, width: int):
    """Slices (image, mask) pairing image[y, x] with mask[y - dy, x - dx]."""
    y0, y1 = max(0, dy), min(height, height + dy)
    x0, x1 = max(0, dx), min(width, width + dx)
    if y1 <= y0 or x1 <= x0:
        return None
    return (slice(y0, y1), slice(x0, x1)), (slice(y0 - dy, y1 - dy), slice(x0 - dx, x1 - dx))


def _zncc(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    if a.size < 2:
        return None
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if denom == 0.0:
        return None
    return min(1.0, max(-1.0, float(np.dot(a, b)) / denom))


def estimate_shift(img_edges: RasterGrid, mask_edges: RasterGrid,
                   search_window: int = DEFAULT_SEARCH_WINDOW) -> Shift:
    """Offset in [-w, w]^2 maximising correlation of img_edges with the shifted mask."""
    if (img_edges.height, img_edges.width) != (mask_edges.height, mask_edges.width):
        raise CoregistrationError(
            f"edge maps differ in size: {img_edges.height}x{img_edges.width} "
            f"vs {mask_edges.height}x{mask_edges.width}"
        )
    if search_window < 0:
        raise CoregistrationError(f"search window must be >= 0, got {search_window}")

    img = img_edges.data[0].astype(np.float64)
    mask = mask_edges.data[0].astype(np.float64)
    img_ok = img_edges.pixel_valid()
    mask_ok = mask_edges.pixel_valid()

    flat = np.ptp(img[img_ok]) == 0 if img_ok.any() else True
    flat = flat or (np.ptp(mask[mask_ok]) == 0 if mask_ok.any() else True)
    if search_window == 0:
        if flat:
            return Shift(0, 0, 0.0)
        score = _score_at(img, mask, img_ok, mask_ok, 0, 0)
        return Shift(0, 0, score if score is not None else 0.0)
    if flat:
        raise DegenerateCorrelationError("edge map has zero variance; no correlation peak exists")

    min_overlap = max(MIN_OVERLAP_SAMPLES, math.ceil(min(int(img_ok.sum()), int(mask_ok.sum())) / 2))
    best: Optional[Shift] = None
    for dx, dy in _candidates(search_window):
        score = _score_at(img, mask, img_ok, mask_ok, dx, dy, min_overlap)
        if score is None:
            continue
        if best is None or score > best.score:
            best = Shift(dx, dy, score)
    if best is None:
        raise DegenerateCorrelationError("no offset in the search window has a defined correlation")
    logger.debug("estimated shift dx=%d dy=%d score=%.6f", best.dx, best.dy, best.score)
    return best


def _score_at(img, mask, img_ok, mask_ok, dx, dy, min_overlap: int = 2) -> Optional[float]:
    windows = _overlap(dx, dy, img.shape[0], img.shape[1])
    if windows is None:
        return None
    iw, mw = windows
    both = img_ok[iw] & mask_ok[mw]
    if int(both.sum()) < min_overlap:
        return None
    return _zncc(img[iw][both], mask[mw][both])


def apply_shift(r: RasterGrid, s: Shift) -> RasterGrid:
    """Translate content by (dx, dy) pixels; the transform is left as is."""
    if abs(s.dx) >= r.width or abs(s.dy) >= r.height:
        raise CoregistrationError(f"shift ({s.dx}, {s.dy}) exceeds raster size {r.height}x{r.width}")
    if s.dx == 0 and s.dy == 0:
        return r
    fill = fill_value(r)
    out = np.full(r.data.shape, fill, dtype=r.data.dtype)
    windows = _overlap(s.dx, s.dy, r.height, r.width)
    dst, src = windows
    out[:, dst[0], dst[1]] = r.data[:, src[0], src[1]]
    return RasterGrid(out, r.transform, fill)


def coregister_pair(image: RasterGrid, mask: RasterGrid,
                    search_window: int = DEFAULT_SEARCH_WINDOW) -> Tuple[RasterGrid, Shift]:
    """Align a rasterized footprint mask to an image; returns (aligned mask, shift)."""
    if not image.same_grid(mask):
        raise CoregistrationError("image and mask must share dimensions and transform")
    img_edges = sobel_magnitude(to_grayscale(image))
    mask_edges = sobel_magnitude(RasterGrid(mask.data[:1].astype(np.float32), mask.transform,
                                            None if mask.nodata is None else float(mask.nodata)))
    shift = estimate_shift(img_edges, mask_edges, search_window)
    return apply_shift(mask, shift), shift
