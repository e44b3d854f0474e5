"""Alias of :mod:`fracbubble.operators`."""

from .operators import *  # noqa: F401,F403
