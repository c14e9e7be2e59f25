"""Validated numerics for partially hyperbolic endomorphisms of the 2-torus."""
from . import _backend
from .intlinalg import IntMat2
from .maps import FourierTerm, PeriodicField, TorusEndomorphism
from .gallery import linear, paper_example, product_example, shear_example

__version__ = "0.1.0"
