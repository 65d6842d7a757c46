"""calibrate: IQR clipping and 0-1 scaling of a multispectral raster."""
import json
import logging

from calibration import PATCH_SIZE, CalibrationMode, calibrate_bands, stats_summary
from raster_core import read_raster, write_raster

logger = logging.getLogger(__name__)


def register(subparsers):
    p = subparsers.add_parser('calibrate', help='Calibrate an image to 0-1 reflectance-like values')
    p.add_argument('--in', dest='src', required=True, help='input raster')
    p.add_argument('--out', required=True, help='output raster (float32)')
    p.add_argument('--mode', default=CalibrationMode.PER_SCOPE.value,
                   choices=[m.value for m in CalibrationMode])
    p.add_argument('--patch-size', type=int, default=PATCH_SIZE)
    p.add_argument('--stats-out', help='write the applied clipping statistics as JSON')
    p.set_defaults(handler=run_calibrate)


def run_calibrate(args) -> int:
    src = read_raster(args.src)
    calibrated, applied = calibrate_bands(src, args.mode, args.patch_size)
    write_raster(calibrated, args.out)
    if args.stats_out:
        with open(args.stats_out, 'w') as f:
            json.dump(stats_summary(applied), f, indent=2)
    logger.info(f"Calibrated {args.src} ({args.mode}) -> {args.out}")
    return 0
