"""Test-function generators on the unit square, supported in [1/4, 3/4)^2."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..grid import GranularFunction, Lattice

SUPPORT = (0.25, 0.75)


def unit_lattice(n: int) -> Lattice:
    return Lattice(n, 1.0 / n)


def _cells(lat: Lattice, length: float) -> int:
    c = length / lat.delta
    if c < 1 or not float(c).is_integer():
        raise ConfigError(f"length {length:g} is not a whole number of cells at grain {lat.delta:g}")
    return int(c)


def _slots(lat: Lattice, side: float) -> tuple[int, int]:
    """(first cell index of the support window, number of aligned slots of ``side`` in it)."""
    lo = _cells(lat, SUPPORT[0])
    span = _cells(lat, SUPPORT[1] - SUPPORT[0])
    s = _cells(lat, side)
    if s > span:
        raise ConfigError("cube larger than the support window")
    return lo, span // s


def cube(lat: Lattice, side: float = 0.25, seed: int | None = None) -> GranularFunction:
    """Indicator of one dyadic cube of the given side; the seed picks which one."""
    lo, slots = _slots(lat, side)
    s = _cells(lat, side)
    if seed is None:
        a = b = 0
    else:
        a, b = np.random.default_rng(seed).integers(0, slots, size=2)
    v = lat.zeros()
    v[lo + a * s:lo + (a + 1) * s, lo + b * s:lo + (b + 1) * s] = 1.0
    return GranularFunction(v, lat)


def scattered_cubes(lat: Lattice, count: int = 8, side: float = 1 / 32, seed: int = 0) -> GranularFunction:
    """Indicator of ``count`` distinct dyadic cubes placed at random aligned slots."""
    lo, slots = _slots(lat, side)
    if count > slots * slots:
        raise ConfigError("more cubes than slots")
    s = _cells(lat, side)
    pick = np.random.default_rng(seed).choice(slots * slots, size=count, replace=False)
    v = lat.zeros()
    for p in pick:
        a, b = divmod(int(p), slots)
        v[lo + a * s:lo + (a + 1) * s, lo + b * s:lo + (b + 1) * s] = 1.0
    return GranularFunction(v, lat)


def _cantor_1d(n_cells: int, depth: int, ratio: float) -> np.ndarray:
    keep = np.zeros(n_cells, bool)
    segs = [(0, n_cells)]
    for _ in range(depth):
        nxt = []
        for a, length in segs:
            sub = length * ratio
            if sub < 1 or not float(sub).is_integer():
                raise ConfigError("Cantor construction falls below the grain")
            sub = int(sub)
            nxt += [(a, sub), (a + length - sub, sub)]
        segs = nxt
    for a, length in segs:
        keep[a:a + length] = True
    return keep


def cantor(lat: Lattice, depth: int = 3, ratio: float = 0.25, seed: int | None = None,
           base: tuple[float, float] = SUPPORT, jitter: int = 8) -> GranularFunction:
    """Product Cantor set over ``base``^2, two kept intervals of relative length ``ratio``
    per step; mass (2 ratio)^{2 depth} times the base area.  A seed shifts the set by
    up to ``jitter`` cells in each coordinate."""
    if not 0 < ratio < 0.5:
        raise ConfigError("ratio must lie in (0, 1/2)")
    lo = _cells(lat, base[0]) if base[0] > 0 else 0
    span = _cells(lat, base[1] - base[0])
    k1 = _cantor_1d(span, depth, ratio)
    shift = np.zeros(2, int)
    if seed is not None and jitter:
        shift = np.random.default_rng(seed).integers(-jitter, jitter + 1, size=2)
    a, b = lo + int(shift[0]), lo + int(shift[1])
    if min(a, b) < 0 or max(a, b) + span > lat.n:
        raise ConfigError("Cantor set leaves the lattice")
    v = lat.zeros()
    v[a:a + span, b:b + span] = np.outer(k1, k1).astype(float)
    return GranularFunction(v, lat)


def multilevel(lat: Lattice, levels: int = 4, per_level: int = 2, side: float = 1 / 16,
               seed: int = 0) -> GranularFunction:
    """Cubes carrying the dyadic values 2^0, 2^-1, ..., 2^-(levels-1), ``per_level`` each."""
    lo, slots = _slots(lat, side)
    count = levels * per_level
    if count > slots * slots:
        raise ConfigError("more cubes than slots")
    s = _cells(lat, side)
    pick = np.random.default_rng(seed).choice(slots * slots, size=count, replace=False)
    v = lat.zeros()
    for t, p in enumerate(pick):
        a, b = divmod(int(p), slots)
        v[lo + a * s:lo + (a + 1) * s, lo + b * s:lo + (b + 1) * s] = 2.0 ** -(t // per_level)
    return GranularFunction(v, lat)


FAMILIES = {
    "cube": cube,
    "scattered-cubes": scattered_cubes,
    "cantor": cantor,
    "multilevel": multilevel,
}


def generate(family: str, lat: Lattice, seed: int | None = None, **params) -> GranularFunction:
    try:
        fn = FAMILIES[family]
    except KeyError:
        raise ConfigError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None
    return fn(lat, seed=seed, **params)
