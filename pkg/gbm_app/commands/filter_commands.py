"""filter: urban/rural land-cover false-positive removal."""
import logging

from postprocess import FilterRules, filter_resampled
from raster_core import read_raster, write_raster

logger = logging.getLogger(__name__)


def _codes(text):
    return [int(c) for c in text.split(',') if c.strip()]


def register(subparsers):
    p = subparsers.add_parser('filter', help='Drop building pixels on implausible land cover')
    p.add_argument('--buildings', required=True)
    p.add_argument('--urban', required=True)
    p.add_argument('--landcover', required=True)
    p.add_argument('--urban-remove', type=_codes, default=None, help='comma separated classes, default 1,3,4')
    p.add_argument('--rural-keep', type=_codes, default=None, help='comma separated classes, default 6')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=run_filter)


def run_filter(args) -> int:
    rules = FilterRules.from_config(args.urban_remove, args.rural_keep)
    filtered = filter_resampled(read_raster(args.buildings), read_raster(args.urban),
                                read_raster(args.landcover), rules)
    write_raster(filtered, args.out)
    logger.info(f"Filtered {args.buildings} -> {args.out}")
    return 0
