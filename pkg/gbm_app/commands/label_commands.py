"""labelgen, cut-patches and prepare-training."""
import logging
from pathlib import Path

import pandas as pd

from calibration import CalibrationMode
from coregister import DEFAULT_SEARCH_WINDOW
from labelgen import (DEFAULT_BETA, PATCH_SIZE, PolygonSet, cut_patches, distance_labels,
                      prepare_training_pairs, rasterize, write_patches)
from raster_core import read_raster, write_raster

logger = logging.getLogger(__name__)


def register(subparsers):
    p = subparsers.add_parser('labelgen', help='Rasterize footprints into distance labels')
    p.add_argument('--polygons', required=True, help='GeoJSON footprints')
    p.add_argument('--frame-like', required=True, help='raster whose grid the labels use')
    p.add_argument('--beta', type=float, default=DEFAULT_BETA)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=run_labelgen)

    p = subparsers.add_parser('cut-patches', help='Cut image/label pairs into training patches')
    p.add_argument('--image', required=True)
    p.add_argument('--labels', required=True)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--patch-size', type=int, default=PATCH_SIZE)
    p.add_argument('--out-dir', required=True)
    p.set_defaults(handler=run_cut_patches)

    p = subparsers.add_parser('prepare-training',
                              help='Footprints + image -> coregistered, calibrated training patches')
    p.add_argument('--image', required=True)
    p.add_argument('--polygons', required=True)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--mode', default=CalibrationMode.PER_SCOPE.value,
                   choices=[m.value for m in CalibrationMode])
    p.add_argument('--window', type=int, default=DEFAULT_SEARCH_WINDOW)
    p.add_argument('--beta', type=float, default=DEFAULT_BETA)
    p.add_argument('--patch-size', type=int, default=PATCH_SIZE)
    p.add_argument('--out-dir', required=True)
    p.set_defaults(handler=run_prepare_training)


def run_labelgen(args) -> int:
    frame = read_raster(args.frame_like)
    polygons = PolygonSet.from_geojson(args.polygons)
    mask = rasterize(polygons, frame.transform, frame.width, frame.height)
    write_raster(distance_labels(mask, args.beta), args.out)
    logger.info(f"Labelled {len(polygons)} polygons -> {args.out}")
    return 0


def run_cut_patches(args) -> int:
    pairs = cut_patches(read_raster(args.image), read_raster(args.labels), args.seed, args.patch_size)
    manifest = write_patches(pairs, args.out_dir)
    logger.info(f"Wrote {len(pairs)} patches, manifest {manifest}")
    return 0


def run_prepare_training(args) -> int:
    pairs, shifts = prepare_training_pairs(
        read_raster(args.image), PolygonSet.from_geojson(args.polygons), args.seed,
        args.mode, args.window, args.beta, args.patch_size,
    )
    write_patches(pairs, args.out_dir)
    pd.DataFrame(
        [{'patch_id': pid, 'dx': s.dx, 'dy': s.dy, 'score': s.score} for pid, s in sorted(shifts.items())],
        columns=['patch_id', 'dx', 'dy', 'score'],
    ).to_csv(Path(args.out_dir) / 'shifts.csv', index=False)
    logger.info(f"Prepared {len(pairs)} training patches in {args.out_dir}")
    return 0
