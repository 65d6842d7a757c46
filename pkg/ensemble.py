"""
Segmenter ensemble: pluggable segmenters, binarization and majority vote.

Segmenters map a calibrated 4-band raster to distance labels 0..10. The
in-process baseline is a spectral threshold; anything else runs as an
external process through the raster file contract

    <cmd> <input-raster-path> <output-raster-path>   (exit 0 on success)
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from labelgen import LABEL_NODATA, N_CLASSES, NEUTRAL_LABEL
from raster_core import RasterError, RasterGrid, read_raster, write_raster

logger = logging.getLogger(__name__)

NDVI_MAX = 0.2
BRIGHTNESS_MIN = 0.15
NDVI_EPS = 1e-6
BUILT_LABEL = 8
OPEN_LABEL = 2
DEFAULT_VOTE_THRESHOLD = 2
EXTERNAL_TIMEOUT = float(os.environ.get('GBM_SEGMENTER_TIMEOUT', '600'))


class SegmentationError(ValueError):
    pass


class SegmenterFailures(SegmentationError):
    """One or more segmenters failed; `errors` maps list position to the cause."""

    def __init__(self, errors: Dict[int, Exception], names: Sequence[str]):
        self.errors = errors
        detail = '; '.join(f"[{k}] {names[k]}: {exc}" for k, exc in sorted(errors.items()))
        super().__init__(f"{len(errors)} segmenter(s) failed: {detail}")


def check_labels(labels: RasterGrid, like: Optional[RasterGrid] = None, source: str = 'labels') -> RasterGrid:
    if labels.bands != 1:
        raise SegmentationError(f"{source}: expected 1 band, got {labels.bands}")
    if like is not None and (labels.width, labels.height) != (like.width, like.height):
        raise SegmentationError(
            f"{source}: output {labels.height}x{labels.width} does not match input {like.height}x{like.width}"
        )
    values = labels.data[0][labels.pixel_valid()]
    if values.size and (values.min() < 0 or values.max() >= N_CLASSES):
        raise SegmentationError(f"{source}: classes outside 0..{N_CLASSES - 1} "
                                f"(min {values.min()}, max {values.max()})")
    return labels


class Segmenter:
    seg_id = 'segmenter'

    def segment(self, img: RasterGrid) -> RasterGrid:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.seg_id!r})"


class BaselineSegmenter(Segmenter):
    """NDVI < 0.2 and mean(R, G, B) > 0.15 -> class 8, otherwise class 2.

    Bands are R, G, B, NIR in calibrated 0-1 units.
    """

    seg_id = 'baseline'

    def segment(self, img: RasterGrid) -> RasterGrid:
        if img.bands != 4:
            raise SegmentationError(f"baseline segmenter needs 4 bands (R,G,B,NIR), got {img.bands}")
        red, green, blue, nir = (img.data[b].astype(np.float64) for b in range(4))
        ndvi = (nir - red) / (nir + red + NDVI_EPS)
        brightness = (red + green + blue) / 3.0
        built = (ndvi < NDVI_MAX) & (brightness > BRIGHTNESS_MIN)
        labels = np.where(built, BUILT_LABEL, OPEN_LABEL).astype(np.uint8)
        valid = img.pixel_valid()
        nodata = None
        if img.nodata is not None or not valid.all():
            nodata = LABEL_NODATA
            labels[~valid] = nodata
        return RasterGrid(labels, img.transform, nodata)


class ExternalProcessSegmenter(Segmenter):
    def __init__(self, command: str, timeout: float = EXTERNAL_TIMEOUT):
        if not command.strip():
            raise SegmentationError("external segmenter command is empty")
        self.command = command
        self.seg_id = f"exec:{command}"
        self.timeout = timeout

    def segment(self, img: RasterGrid) -> RasterGrid:
        with tempfile.TemporaryDirectory(prefix='gbm-seg-') as tmp:
            src = Path(tmp) / 'input.tif'
            dst = Path(tmp) / 'output.tif'
            write_raster(img, src)
            argv = shlex.split(self.command) + [str(src), str(dst)]
            logger.debug("running %s", argv)
            try:
                proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise SegmentationError(f"{self.command}: could not run ({exc})") from exc
            if proc.returncode != 0:
                raise SegmentationError(
                    f"{self.command}: exit status {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            try:
                labels = read_raster(dst)
            except (OSError, RasterError) as exc:
                raise SegmentationError(f"{self.command}: unreadable output ({exc})") from exc
        labels = check_labels(labels, img, self.command)
        return RasterGrid(labels.data, img.transform, labels.nodata)


def get_segmenter(spec: str) -> Segmenter:
    spec = spec.strip()
    if spec == 'baseline':
        return BaselineSegmenter()
    if spec.startswith('exec:'):
        return ExternalProcessSegmenter(spec[len('exec:'):])
    raise SegmentationError(f"unknown segmenter {spec!r} (expected 'baseline' or 'exec:<cmd>')")


def run_segmenters(img: RasterGrid, segmenters: Sequence[Segmenter], workers: int = 1) -> List[RasterGrid]:
    """One label raster per segmenter, in list order."""
    if not segmenters:
        raise SegmentationError("at least one segmenter is required")

    def _run(seg: Segmenter) -> RasterGrid:
        return check_labels(seg.segment(img), img, seg.seg_id)

    results: List[Optional[RasterGrid]] = [None] * len(segmenters)
    errors: Dict[int, Exception] = {}
    if workers > 1 and len(segmenters) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run, seg) for seg in segmenters]
            for k, fut in enumerate(futures):
                try:
                    results[k] = fut.result()
                except Exception as exc:
                    errors[k] = exc
    else:
        for k, seg in enumerate(segmenters):
            try:
                results[k] = _run(seg)
            except Exception as exc:
                errors[k] = exc
    if errors:
        raise SegmenterFailures(errors, [s.seg_id for s in segmenters])
    return results


def binarize(labels: RasterGrid) -> RasterGrid:
    """1 where label > 5; nodata stays nodata."""
    check_labels(labels)
    valid = labels.pixel_valid()
    mask = (labels.data[0] > NEUTRAL_LABEL).astype(np.uint8)
    nodata = None
    if labels.nodata is not None:
        nodata = LABEL_NODATA
        mask[~valid] = nodata
    return RasterGrid(mask, labels.transform, nodata)


@dataclass
class VoteStack:
    masks: List[RasterGrid]
    threshold: int = DEFAULT_VOTE_THRESHOLD

    def __post_init__(self):
        if not self.masks:
            raise SegmentationError("vote needs at least one mask")
        if not 1 <= self.threshold <= len(self.masks):
            raise SegmentationError(f"threshold {self.threshold} outside 1..{len(self.masks)}")
        first = self.masks[0]
        for k, m in enumerate(self.masks[1:], start=1):
            if not first.same_grid(m):
                raise SegmentationError(f"mask {k} is not aligned with mask 0")


def majority_vote(v: VoteStack) -> RasterGrid:
    """Building where at least `threshold` valid votes say so.

    Nodata votes abstain; pixels with no valid vote at all are nodata.
    """
    first = v.masks[0]
    votes = np.zeros((first.height, first.width), dtype=np.int32)
    voters = np.zeros_like(votes)
    for m in v.masks:
        valid = m.pixel_valid()
        votes += ((m.data[0] != 0) & valid).astype(np.int32)
        voters += valid.astype(np.int32)
    out = (votes >= v.threshold).astype(np.uint8)
    silent = voters == 0
    nodata = None
    if silent.any() or any(m.nodata is not None for m in v.masks):
        nodata = LABEL_NODATA
        out[silent] = nodata
    return RasterGrid(out, first.transform, nodata)
