"""Higher pentagram maps in exact and multiprecision arithmetic.

Submodules: ``algebra`` (backends, Laurent matrices, characteristic
polynomials), ``polygon`` (twisted polygons and their coordinates),
``pentagram`` (the map), ``lax`` (Lax matrices and spectral invariants),
``scaling`` (scaling symmetries), ``kdvlimit`` (the continuous limit) and
``cli``.
"""

from __future__ import annotations

from .algebra import RATIONAL, float_backend
from .lax import conservation_report, lax_matrix, spectral
from .pentagram import iterate, pentagram_map
from .polygon import TwistedCoords, random_polygon
from .scaling import ScalingRule, apply_scaling

__version__ = "0.1.0"

__all__ = [
    "RATIONAL",
    "ScalingRule",
    "TwistedCoords",
    "apply_scaling",
    "conservation_report",
    "float_backend",
    "iterate",
    "lax_matrix",
    "pentagram_map",
    "random_polygon",
    "spectral",
]
