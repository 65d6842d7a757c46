"""Top-level pytest conftest.

Only truly cross-cutting fixtures stay here; raster builders and scenario
helpers live in the per-area conftests.
"""

import logging
import os
import sys

import hypothesis
import pytest

# Make project root importable for `import raster_core` etc.
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture(autouse=True)
def disable_logging():
    """Silence loggers during tests to keep output readable."""
    logging.disable(logging.CRITICAL)
    yield
    logging.disable(logging.NOTSET)
