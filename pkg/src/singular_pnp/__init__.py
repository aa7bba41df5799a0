"""Finite-volume Poisson-Nernst-Planck solver with singular permanent point charges."""
from .evolution import SchemeConfig, run
from .grid import Grid
from .transform import prepare_initial
from .weights import prepare_weights

__version__ = "0.1.0"
__all__ = ["Grid", "SchemeConfig", "prepare_initial", "prepare_weights", "run"]
