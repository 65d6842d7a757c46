"""coregister: estimate (and optionally apply) the mask-to-image offset."""
import logging

from coregister import DEFAULT_SEARCH_WINDOW, coregister_pair
from raster_core import read_raster, write_raster

logger = logging.getLogger(__name__)


def register(subparsers):
    p = subparsers.add_parser('coregister', help='Align a footprint mask to an image by edge correlation')
    p.add_argument('--image', required=True)
    p.add_argument('--mask', required=True, help='rasterized footprint mask on the image grid')
    p.add_argument('--window', type=int, default=DEFAULT_SEARCH_WINDOW)
    p.add_argument('--out-shift', required=True, help='text file receiving "dx dy score"')
    p.add_argument('--out-mask', help='write the shifted mask here')
    p.set_defaults(handler=run_coregister)


def run_coregister(args) -> int:
    image = read_raster(args.image)
    mask = read_raster(args.mask)
    aligned, shift = coregister_pair(image, mask, args.window)
    with open(args.out_shift, 'w') as f:
        f.write(shift.format() + '\n')
    if args.out_mask:
        write_raster(aligned, args.out_mask)
    logger.info(f"Shift for {args.mask}: {shift.format()}")
    print(shift.format())
    return 0
