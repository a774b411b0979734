"""Exact computations with theta-algebras: bar complexes, their weight
spectral sequence, and v1-periodic homotopy from Q/im(theta)."""

from thetabar.errors import ThetabarError

__version__ = "0.1.0"

__all__ = ["ThetabarError", "__version__"]
