"""Reversible 2D weakly compressible SPH.

The state can be held in Q31.32 fixed point, which makes velocity Verlet
bit-exactly time reversible, or in IEEE doubles for comparison.
"""

__version__ = "0.1.0"

from ._backend import available as available_backends  # noqa: E402
from ._backend import get_backend  # noqa: E402

__all__ = ["__version__", "available_backends", "get_backend"]
