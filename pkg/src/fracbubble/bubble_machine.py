"""Alias of :mod:`fracbubble.reduction`."""

from .reduction import *  # noqa: F401,F403
