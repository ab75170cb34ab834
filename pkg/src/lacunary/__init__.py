"""Discrete toolkit for the lacunary spherical maximal function in the plane."""
from .errors import (
    ConfigError, DomainError, DomainOverflowError, InconsistencyError, LacunaryError, ResolutionError,
)
from .grid import (
    DyadicCube, GranularFunction, GridSet, Lattice, iterated_log, length_of, mass, maximal_dyadic_cover,
)
from .maximal import ScaleRange, hardy_littlewood, lacunary_maximal, spherical_mean, superlevel
from .spherical import (
    DiscreteMeasure, Direction, OrientedRect, autocorrelation_kernel, cap_measure, circle_measure,
    convolve, dominate_kernel,
)

__version__ = "0.1.0"
