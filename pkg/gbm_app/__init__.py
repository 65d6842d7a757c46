"""
GBM command-line application.

Each module under gbm_app/commands registers one group of subcommands on
the shared parser; handlers return a process exit code.

    0  success
    1  stage or usage error
    2  config error
    3  IO error (missing or unreadable files, malformed manifests)
    4  every selected cell failed
"""

import argparse
import logging
import logging.handlers
import os
import sys
from typing import List, Optional

from raster_core import RasterFormatError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STAGE_ERROR = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3
EXIT_ALL_CELLS_FAILED = 4


def setup_logging():
    """LOG_LEVEL controls verbosity; GBM_LOG_FILE names the rotating log (empty disables it)."""
    handlers = [logging.StreamHandler()]
    log_file = os.environ.get('GBM_LOG_FILE', 'gbm.log').strip()
    if log_file:
        handlers.append(logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=10 * 1024 * 1024,  # 10MB
            backupCount=3
        ))
    log_level = os.environ.get('LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format='%(asctime)s - %(levelname)s - %(name)s - %(message)s',
        handlers=handlers
    )


class GbmArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_STAGE_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    from gbm_app.commands import (analytics_commands, calibrate_commands, coregister_commands,
                                  evaluation_commands, filter_commands, fixtures_commands,
                                  inference_commands, label_commands, pipeline_commands)

    parser = GbmArgumentParser(prog='gbm', description='Desk-scale building map pipeline')
    subparsers = parser.add_subparsers(dest='command', metavar='<command>')
    subparsers.required = True
    for module in (pipeline_commands, calibrate_commands, coregister_commands, label_commands,
                   inference_commands, filter_commands, analytics_commands, evaluation_commands,
                   fixtures_commands):
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    from pipeline_manager import ConfigError, ManifestError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_STAGE_ERROR
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (OSError, RasterFormatError, ManifestError) as e:
        logger.error(f"IO error: {e}")
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO_ERROR
    except (ValueError, RuntimeError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STAGE_ERROR
