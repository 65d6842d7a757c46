"""infer and vote."""
import logging
from pathlib import Path

from ensemble import (DEFAULT_VOTE_THRESHOLD, VoteStack, binarize, get_segmenter, majority_vote,
                      run_segmenters)
from raster_core import read_raster, write_raster

logger = logging.getLogger(__name__)


def register(subparsers):
    p = subparsers.add_parser('infer', help='Run segmenters over a calibrated image')
    p.add_argument('--image', required=True)
    p.add_argument('--segmenter', action='append', required=True,
                   help="'baseline' or 'exec:<cmd>'; repeat for an ensemble")
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('--out-dir', required=True)
    p.set_defaults(handler=run_infer)

    p = subparsers.add_parser('vote', help='Majority vote over binary building masks')
    p.add_argument('--threshold', type=int, default=DEFAULT_VOTE_THRESHOLD)
    p.add_argument('--out', required=True)
    p.add_argument('masks', nargs='+')
    p.set_defaults(handler=run_vote)


def run_infer(args) -> int:
    """Writes labels-<k>.tif and binary-<k>.tif per segmenter, k in argument order."""
    image = read_raster(args.image)
    segmenters = [get_segmenter(s) for s in args.segmenter]
    out_dir = Path(args.out_dir)
    for k, labels in enumerate(run_segmenters(image, segmenters, args.workers)):
        write_raster(labels, out_dir / f"labels-{k}.tif")
        write_raster(binarize(labels), out_dir / f"binary-{k}.tif")
        logger.info(f"Segmenter {k} ({segmenters[k].seg_id}) done")
    return 0


def run_vote(args) -> int:
    masks = [read_raster(m) for m in args.masks]
    write_raster(majority_vote(VoteStack(masks, args.threshold)), args.out)
    logger.info(f"Voted {len(masks)} masks at threshold {args.threshold} -> {args.out}")
    return 0
