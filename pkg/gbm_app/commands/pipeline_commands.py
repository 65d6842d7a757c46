"""run and manifest-summary."""
import dataclasses
import json
import logging

from gbm_app import EXIT_ALL_CELLS_FAILED
from pipeline_manager import all_cells_failed, load_config, read_manifest, run_pipeline, summarize_manifest

logger = logging.getLogger(__name__)


def register(subparsers):
    p = subparsers.add_parser('run', help='Run the full pipeline from a JSON config')
    p.add_argument('--config', required=True)
    p.add_argument('--workers', type=int, help='override the configured worker count')
    p.add_argument('--out-dir', help='override the configured output directory')
    p.set_defaults(handler=run_run)

    p = subparsers.add_parser('manifest-summary', help='Scene counts per kind and year')
    p.add_argument('--manifest', required=True)
    p.set_defaults(handler=run_manifest_summary)


def run_run(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.workers is not None:
        overrides['workers'] = args.workers
    if args.out_dir is not None:
        overrides['out_dir'] = args.out_dir
    if overrides:
        config = dataclasses.replace(config, **overrides)
    run_manifest = run_pipeline(config)
    print(json.dumps(run_manifest['counts'], sort_keys=True))
    if all_cells_failed(run_manifest):
        logger.error("Every selected cell failed")
        return EXIT_ALL_CELLS_FAILED
    return 0


def run_manifest_summary(args) -> int:
    print(summarize_manifest(read_manifest(args.manifest)).to_csv(index=False), end='')
    return 0
