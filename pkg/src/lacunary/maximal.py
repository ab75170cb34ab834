"""Spherical means, the truncated lacunary maximal function, dyadic Hardy-Littlewood."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ResolutionError
from .grid import GranularFunction, GridSet, pyramid, upsample
from .spherical import circle_measure, convolve


@dataclass(frozen=True)
class ScaleRange:
    kmin: int
    kmax: int

    def __post_init__(self):
        if self.kmin > self.kmax:
            raise ConfigError(f"empty scale range [{self.kmin}, {self.kmax}]")

    def check(self, delta: float) -> "ScaleRange":
        if 2.0 ** self.kmin < 8 * delta:
            raise ResolutionError(f"2^{self.kmin} is below the resolvability floor 8*delta")
        return self

    def __iter__(self):
        return iter(range(self.kmin, self.kmax + 1))

    def __len__(self):
        return self.kmax - self.kmin + 1


def spherical_mean(f: GranularFunction, k: int, method: str = "auto") -> GranularFunction:
    """A_k f = f * sigma_k."""
    return convolve(circle_measure(k, f.delta), f, method)


def lacunary_maximal(f: GranularFunction, rng: ScaleRange, method: str = "auto") -> GranularFunction:
    """max over k in ``rng`` of |A_k f|."""
    rng.check(f.delta)
    absf = GranularFunction(np.abs(f.values), f.lattice)
    out = np.zeros_like(f.values)
    if not absf.values.any():
        return GranularFunction(out, f.lattice)
    for k in rng:
        np.maximum(out, spherical_mean(absf, k, method).values, out=out)
    return GranularFunction(out, f.lattice)


def hardy_littlewood(f: GranularFunction) -> GranularFunction:
    """Dyadic maximal function: sup of |f|-averages over dyadic cubes containing each cell."""
    n = f.lattice.n
    sums = pyramid(np.abs(f.values), "sum")
    out = np.zeros((n, n))
    for level, s in enumerate(sums):
        cells = (n >> level) ** 2
        np.maximum(out, upsample(s / cells, n >> level), out=out)
    return GranularFunction(out, f.lattice)


def superlevel(g: GranularFunction, alpha: float) -> GridSet:
    """{g > alpha} (strict)."""
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    return GridSet(g.values > alpha, g.lattice)
