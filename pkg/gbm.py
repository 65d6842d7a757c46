#!/usr/bin/env python3
"""
Command-line entry point.
Usage: python gbm.py <command> [options]   (python gbm.py --help lists commands)
"""
import sys

from gbm_app import main, setup_logging

if __name__ == '__main__':
    setup_logging()
    sys.exit(main())
