"""Reduced-basis neural operators with derivative-informed training."""

import json

from ._rbno import *  # noqa: F401,F403
from ._rbno import preset_config as _preset_config


def preset(name, problem):
    """Preset experiment config as a dict."""
    return json.loads(_preset_config(name, problem))
