"""
Radiometric calibration: IQR clipping to [0, Q3 + 1.5*IQR] then 0-1 scaling.

Two modes:
    per-scope  one set of band statistics over the whole input raster
               (a city mosaic in production)
    per-patch  statistics recomputed on every 256x256 patch of the same
               origin-anchored lattice labelgen cuts training patches on
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from raster_core import DEFAULT_NODATA, RasterGrid, nodata_mask

logger = logging.getLogger(__name__)

PATCH_SIZE = 256
IQR_FACTOR = 1.5
CALIBRATED_NODATA = DEFAULT_NODATA['float32']


class CalibrationError(ValueError):
    pass


class CalibrationMode(str, Enum):
    PER_SCOPE = 'per-scope'
    PER_PATCH = 'per-patch'

    @classmethod
    def parse(cls, value) -> 'CalibrationMode':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ', '.join(m.value for m in cls)
            raise CalibrationError(f"unknown calibration mode {value!r} (expected one of: {choices})") from None


@dataclass(frozen=True)
class BandStats:
    q1: float
    q3: float

    def __post_init__(self):
        if self.q3 < self.q1:
            raise CalibrationError(f"q3 {self.q3} below q1 {self.q1}")

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    @property
    def clip_lo(self) -> float:
        return 0.0

    @property
    def clip_hi(self) -> float:
        return self.q3 + IQR_FACTOR * self.iqr

    def to_dict(self) -> dict:
        return {'q1': self.q1, 'q3': self.q3, 'iqr': self.iqr,
                'clip_lo': self.clip_lo, 'clip_hi': self.clip_hi}


def _quantile(sorted_values: np.ndarray, q: float) -> float:
    """Linear-interpolated quantile at fractional rank q*(n-1) of an ascending array."""
    n = len(sorted_values)
    if n == 1:
        return float(sorted_values[0])
    pos = (n - 1) * q
    lo = int(math.floor(pos))
    hi = int(math.ceil(pos))
    if lo == hi:
        return float(sorted_values[lo])
    frac = pos - lo
    return float(sorted_values[lo]) * (1 - frac) + float(sorted_values[hi]) * frac


def _valid_samples(samples, nodata=None) -> np.ndarray:
    values = np.asarray(samples).ravel()
    keep = ~nodata_mask(values, nodata)
    if values.dtype.kind == 'f':
        keep &= np.isfinite(values)
    return values[keep].astype(np.float64)


def band_quantiles(samples, nodata=None) -> BandStats:
    """Q1/Q3 of `samples` with nodata and non-finite values excluded."""
    values = _valid_samples(samples, nodata)
    if values.size == 0:
        raise CalibrationError("no valid samples to compute quantiles from")
    values.sort()
    return BandStats(q1=_quantile(values, 0.25), q3=_quantile(values, 0.75))


def _scale(values: np.ndarray, stats: BandStats) -> np.ndarray:
    hi = stats.clip_hi
    if hi <= 0:
        return np.zeros(values.shape, dtype=np.float32)
    clipped = np.clip(values.astype(np.float64), 0.0, hi)
    return (clipped / hi).astype(np.float32)


def _patch_windows(height: int, width: int, size: int):
    for row in range(0, height, size):
        for col in range(0, width, size):
            yield row, col, slice(row, min(row + size, height)), slice(col, min(col + size, width))


def calibrate_bands(r: RasterGrid, mode=CalibrationMode.PER_SCOPE,
                    patch_size: int = PATCH_SIZE) -> Tuple[RasterGrid, Dict]:
    """Calibrate `r` and return it with the statistics that were applied.

    The statistics dict maps 'per-scope' to one BandStats per band, or
    'per-patch' to {(row, col): [BandStats | None per band]} where None marks
    a patch band with no valid sample (left as nodata).
    """
    mode = CalibrationMode.parse(mode)
    if patch_size < 1:
        raise CalibrationError(f"patch size must be positive, got {patch_size}")

    invalid = r.invalid_mask()
    has_nodata = r.nodata is not None or bool(invalid.any())
    out = np.zeros(r.data.shape, dtype=np.float32)

    if mode is CalibrationMode.PER_SCOPE:
        per_band: List[BandStats] = []
        for b in range(r.bands):
            try:
                stats = band_quantiles(r.data[b][~invalid[b]])
            except CalibrationError as exc:
                raise CalibrationError(f"band {b}: {exc}") from exc
            per_band.append(stats)
            out[b] = _scale(r.data[b], stats)
            logger.debug("band %d: q1=%s q3=%s clip_hi=%s", b, stats.q1, stats.q3, stats.clip_hi)
        applied = {'mode': mode.value, 'bands': per_band}
    else:
        per_patch: Dict[Tuple[int, int], List[Optional[BandStats]]] = {}
        for row, col, rows, cols in _patch_windows(r.height, r.width, patch_size):
            patch_stats = []
            for b in range(r.bands):
                window = r.data[b, rows, cols]
                valid = ~invalid[b, rows, cols]
                if not valid.any():
                    patch_stats.append(None)
                    continue
                stats = band_quantiles(window[valid])
                patch_stats.append(stats)
                out[b, rows, cols] = _scale(window, stats)
            per_patch[(row, col)] = patch_stats
        applied = {'mode': mode.value, 'patches': per_patch}

    nodata = None
    if has_nodata:
        nodata = CALIBRATED_NODATA
        out[invalid] = nodata
    return RasterGrid(out, r.transform, nodata), applied


def calibrate(r: RasterGrid, mode=CalibrationMode.PER_SCOPE, patch_size: int = PATCH_SIZE) -> RasterGrid:
    calibrated, _ = calibrate_bands(r, mode, patch_size)
    return calibrated


def stats_summary(applied: Dict) -> dict:
    """JSON-friendly view of the statistics returned by calibrate_bands."""
    if 'bands' in applied:
        return {'mode': applied['mode'], 'bands': [s.to_dict() for s in applied['bands']]}
    return {
        'mode': applied['mode'],
        'patches': [
            {'row': row, 'col': col, 'bands': [s.to_dict() if s else None for s in stats]}
            for (row, col), stats in sorted(applied['patches'].items())
        ],
    }
