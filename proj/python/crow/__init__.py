"""Cropping-window training-set tools for object detection in large, sparse images."""

from ._crow import *  # noqa: F401,F403
from ._crow import __version__  # noqa: F401
