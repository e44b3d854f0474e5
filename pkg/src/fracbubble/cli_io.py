"""Alias bundling :mod:`fracbubble.cli` and :mod:`fracbubble.config`."""

from .cli import *  # noqa: F401,F403
from .cli import main  # noqa: F401
from .config import ExperimentConfig, load_config  # noqa: F401
