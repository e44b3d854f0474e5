"""Alias of :mod:`fracbubble.constants`."""

from .constants import *  # noqa: F401,F403
