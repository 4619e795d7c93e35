"""Robust Koopman operator identification: Python bindings to the C++ core."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import __version__, run_config as _run_config


def run(config, output_dir, jobs=1):
    """Run an experiment config (dict) and return its manifest as a dict."""
    return _json.loads(_run_config(_json.dumps(config), str(output_dir), jobs))
