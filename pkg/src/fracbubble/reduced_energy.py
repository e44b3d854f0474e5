"""Alias of :mod:`fracbubble.landscape`."""

from .landscape import *  # noqa: F401,F403
