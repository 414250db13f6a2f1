"""Python bindings for the epigraph C++ core."""

from ._epigraph import *  # noqa: F401,F403
from ._epigraph import Error, __doc__  # noqa: F401

__version__ = "0.1.0"
