"""Spatio-temporal memory multi-object tracking with MOT evaluation tools."""
from . import backend
from .errors import InvariantError

__version__ = "0.1.0"
__all__ = ["InvariantError", "backend", "__version__"]
