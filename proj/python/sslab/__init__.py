"""Toy self-supervised learning lab."""

import json

from ._core import *  # noqa: F401,F403
from ._core import named_experiment_configs as _configs
from ._core import run as _run


def named_experiment(key):
    """Variant configs of a registered experiment as dicts."""
    return [json.loads(c) for c in _configs(key)]


def run_config(config, out_dir=""):
    """Run a config dict; returns per-seed lists of tick records."""
    return _run(json.dumps(config), out_dir)
