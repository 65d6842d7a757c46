"""
Area-aware false-positive filtering of raw building masks.

Urban pixels only lose buildings to vegetated open classes; outside urban
areas a building must sit on impervious land cover to survive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import FrozenSet, Iterable, Optional

import numpy as np

from labelgen import LABEL_NODATA
from raster_core import RasterGrid, align_to

logger = logging.getLogger(__name__)


class FilterError(ValueError):
    pass


class LandCover(IntEnum):
    CROPLAND = 1
    FOREST = 2
    GRASS = 3
    SHRUB = 4
    WATER = 5
    IMPERVIOUS = 6
    BARE = 7
    SNOW = 8
    CLOUD = 9


LAND_COVER_CODES = frozenset(int(c) for c in LandCover)


def _codes(values: Iterable[int], what: str) -> FrozenSet[int]:
    codes = frozenset(int(v) for v in values)
    unknown = codes - LAND_COVER_CODES
    if unknown:
        raise FilterError(f"{what}: unknown land-cover codes {sorted(unknown)}")
    return codes


@dataclass(frozen=True)
class FilterRules:
    urban_remove: FrozenSet[int] = field(
        default_factory=lambda: frozenset({LandCover.CROPLAND, LandCover.GRASS, LandCover.SHRUB}))
    rural_keep: FrozenSet[int] = field(default_factory=lambda: frozenset({LandCover.IMPERVIOUS}))

    @classmethod
    def from_config(cls, urban_remove_classes=None, rural_keep_classes=None) -> 'FilterRules':
        defaults = cls()
        return cls(
            urban_remove=_codes(urban_remove_classes, 'urban_remove_classes')
            if urban_remove_classes is not None else defaults.urban_remove,
            rural_keep=_codes(rural_keep_classes, 'rural_keep_classes')
            if rural_keep_classes is not None else defaults.rural_keep,
        )


def check_land_cover(lc: RasterGrid) -> None:
    values = lc.data[0][lc.pixel_valid()]
    if values.size:
        bad = np.setdiff1d(np.unique(values), np.fromiter(LAND_COVER_CODES, dtype=np.int64))
        if bad.size:
            raise FilterError(f"land cover holds codes outside 1..9: {bad[:10].tolist()}")


def area_aware_filter(buildings: RasterGrid, urban: RasterGrid, lc: RasterGrid,
                      rules: Optional[FilterRules] = None) -> RasterGrid:
    """Drop building pixels contradicted by land cover; never adds buildings.

    Missing land cover keeps the pixel. Missing urban information is treated
    as urban, the rule that removes less.
    """
    rules = rules or FilterRules()
    for name, layer in (('urban', urban), ('landcover', lc)):
        if not buildings.same_grid(layer):
            raise FilterError(
                f"{name} layer {layer.height}x{layer.width} is not aligned with buildings "
                f"{buildings.height}x{buildings.width}; resample it first"
            )
    check_land_cover(lc)

    building_valid = buildings.pixel_valid()
    is_building = (buildings.data[0] != 0) & building_valid
    lc_valid = lc.pixel_valid()
    codes = lc.data[0].astype(np.int64)
    is_urban = (urban.data[0] != 0) | ~urban.pixel_valid()

    urban_hit = np.isin(codes, sorted(int(c) for c in rules.urban_remove)) & lc_valid
    rural_hit = ~np.isin(codes, sorted(int(c) for c in rules.rural_keep)) & lc_valid
    remove = is_building & np.where(is_urban, urban_hit, rural_hit)

    out = is_building & ~remove
    result = out.astype(np.uint8)
    nodata = None
    if buildings.nodata is not None:
        nodata = LABEL_NODATA
        result[~building_valid] = nodata
    logger.debug("filter removed %d of %d building pixels", int(remove.sum()), int(is_building.sum()))
    return RasterGrid(result, buildings.transform, nodata)


def filter_resampled(buildings: RasterGrid, urban: RasterGrid, lc: RasterGrid,
                     rules: Optional[FilterRules] = None) -> RasterGrid:
    """Nearest-neighbour align coarser urban/land-cover layers, then filter."""
    urban_al = urban if buildings.same_grid(urban) else align_to(urban, buildings)
    lc_al = lc if buildings.same_grid(lc) else align_to(lc, buildings)
    return area_aware_filter(buildings, urban_al, lc_al, rules)
