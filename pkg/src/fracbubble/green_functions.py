"""Alias of :mod:`fracbubble.green`."""

from .green import *  # noqa: F401,F403
