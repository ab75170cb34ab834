"""Lattices, granular functions, bitmap sets and dyadic cubes.

Everything lives on a square lattice of ``n x n`` cells of side ``delta``
whose lower-left corner is ``origin``.  Arrays are indexed ``[i, j]`` with
``i`` along x and ``j`` along y; cell ``(i, j)`` is the half-open square
``origin + delta * ([i, i+1) x [j, j+1))``.  Dyadic cubes are taken relative
to the lattice root (the whole lattice square).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .errors import DomainError


def is_dyadic(x: float) -> bool:
    """True if ``x`` is an exact (positive or negative) power of two."""
    if x <= 0 or not math.isfinite(x):
        return False
    return math.frexp(x)[0] == 0.5


def exact_log2(x: float) -> int:
    if not is_dyadic(x):
        raise DomainError(f"{x!r} is not a power of two")
    return math.frexp(x)[1] - 1


@dataclass(frozen=True)
class Lattice:
    n: int
    delta: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.n <= 0 or self.n & (self.n - 1):
            raise DomainError(f"cells per side must be a power of two, got {self.n}")
        if not is_dyadic(self.delta):
            raise DomainError(f"grain must be dyadic, got {self.delta}")
        ox, oy = (float(v) for v in self.origin)
        if not ((ox / self.delta).is_integer() and (oy / self.delta).is_integer()):
            raise DomainError("lattice origin must be a multiple of the grain")
        object.__setattr__(self, "origin", (ox, oy))

    @property
    def L(self) -> float:
        return self.n * self.delta

    @property
    def depth(self) -> int:
        """Number of dyadic levels below the root (root is level 0)."""
        return self.n.bit_length() - 1

    @property
    def cell_area(self) -> float:
        return self.delta ** 2

    def corner_index(self) -> tuple[int, int]:
        """Origin in units of ``delta``: the global integer address of cell (0, 0)."""
        return (int(round(self.origin[0] / self.delta)),
                int(round(self.origin[1] / self.delta)))

    def offset_in(self, outer: "Lattice") -> tuple[int, int]:
        """Index of this lattice's cell (0, 0) inside ``outer``."""
        if outer.delta != self.delta:
            raise DomainError("lattices have different grains")
        a, b = self.corner_index()
        c, d = outer.corner_index()
        return a - c, b - d

    def contains_lattice(self, inner: "Lattice") -> bool:
        i0, j0 = inner.offset_in(self)
        return i0 >= 0 and j0 >= 0 and i0 + inner.n <= self.n and j0 + inner.n <= self.n

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        t = (np.arange(self.n) + 0.5) * self.delta
        return np.meshgrid(self.origin[0] + t, self.origin[1] + t, indexing="ij")

    def cube(self, level: int, i: int, j: int) -> "DyadicCube":
        return DyadicCube(self, level, i, j)

    def root(self) -> "DyadicCube":
        return DyadicCube(self, 0, 0, 0)

    def window(self, cube: "DyadicCube") -> "Lattice":
        """The sub-lattice covering exactly ``cube``."""
        return _window(self, cube.level, cube.i, cube.j)

    def zeros(self, dtype=float) -> np.ndarray:
        return np.zeros((self.n, self.n), dtype=dtype)

    def around(self, margin: float) -> "Lattice":
        """A larger lattice centred on this one, with at least ``margin`` (length)
        of padding on every side."""
        pad = max(0, math.ceil(margin / self.delta - 1e-9))
        n = 1 << math.ceil(math.log2(self.n + 2 * pad))
        shift = (n - self.n) // 2
        return Lattice(n, self.delta, (self.origin[0] - shift * self.delta,
                                       self.origin[1] - shift * self.delta))


@dataclass(frozen=True)
class DyadicCube:
    lattice: Lattice
    level: int
    i: int
    j: int

    def __post_init__(self):
        if not 0 <= self.level <= self.lattice.depth:
            raise DomainError(f"level {self.level} outside lattice depth {self.lattice.depth}")
        m = 1 << self.level
        if not (0 <= self.i < m and 0 <= self.j < m):
            raise DomainError("cube index outside lattice")

    @property
    def cells(self) -> int:
        return self.lattice.n >> self.level

    @property
    def side(self) -> float:
        return self.cells * self.lattice.delta

    @property
    def diam(self) -> float:
        return self.side * math.sqrt(2.0)

    @property
    def slices(self) -> tuple[slice, slice]:
        s = self.cells
        return slice(self.i * s, (self.i + 1) * s), slice(self.j * s, (self.j + 1) * s)

    @property
    def corner(self) -> tuple[float, float]:
        ox, oy = self.lattice.origin
        return ox + self.i * self.side, oy + self.j * self.side

    @property
    def center(self) -> tuple[float, float]:
        x, y = self.corner
        h = self.side / 2
        return x + h, y + h

    def parent(self) -> "DyadicCube | None":
        if self.level == 0:
            return None
        return DyadicCube(self.lattice, self.level - 1, self.i // 2, self.j // 2)

    def children(self) -> list["DyadicCube"]:
        if self.cells == 1:
            return []
        return [DyadicCube(self.lattice, self.level + 1, 2 * self.i + a, 2 * self.j + b)
                for a in (0, 1) for b in (0, 1)]

    def contains(self, other: "DyadicCube") -> bool:
        if other.lattice != self.lattice or other.level < self.level:
            return False
        shift = other.level - self.level
        return (other.i >> shift) == self.i and (other.j >> shift) == self.j

    def mask(self) -> "GridSet":
        m = self.lattice.zeros(bool)
        m[self.slices] = True
        return GridSet(m, self.lattice)

    def __repr__(self):
        return f"DyadicCube(level={self.level}, i={self.i}, j={self.j}, side={self.side:g})"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


class GranularFunction:
    """Function constant on the cells of a lattice; nonnegative unless ``signed``
    (projections and bad parts are signed)."""

    __slots__ = ("values", "lattice")

    def __init__(self, values, lattice: Lattice, signed: bool = False):
        values = np.asarray(values, dtype=float)
        if values.shape != (lattice.n, lattice.n):
            raise DomainError(f"values shape {values.shape} does not match lattice n={lattice.n}")
        if not np.all(np.isfinite(values)):
            raise DomainError("granular function values must be finite")
        if not signed and values.size and values.min() < 0:
            raise DomainError("granular function values must be nonnegative")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "lattice", lattice)

    def __setattr__(self, name, value):
        raise AttributeError("GranularFunction is immutable")

    @classmethod
    def from_array(cls, values, delta: float, origin=(0.0, 0.0)) -> "GranularFunction":
        values = np.asarray(values, dtype=float)
        return cls(values, Lattice(values.shape[0], delta, origin))

    @classmethod
    def trusted(cls, values: np.ndarray, lattice: Lattice) -> "GranularFunction":
        """Wrap values already known to be valid (finite, right shape); no checks."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "values", _readonly(values))
        object.__setattr__(obj, "lattice", lattice)
        return obj

    @classmethod
    def zeros(cls, lattice: Lattice) -> "GranularFunction":
        return cls(lattice.zeros(), lattice)

    @property
    def delta(self) -> float:
        return self.lattice.delta

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def mass(self) -> float:
        return mass(self)

    def support(self) -> "GridSet":
        return GridSet(self.values != 0, self.lattice)

    def restrict(self, cube: DyadicCube) -> "GranularFunction":
        """The function on ``cube``'s own window lattice."""
        if cube.lattice != self.lattice:
            raise DomainError("cube belongs to a different lattice")
        return GranularFunction(self.values[cube.slices], self.lattice.window(cube))

    def mask(self, s: "GridSet") -> "GranularFunction":
        _same(self.lattice, s.lattice)
        return GranularFunction(np.where(s.mask, self.values, 0.0), self.lattice, signed=True)

    def embed(self, outer: Lattice) -> "GranularFunction":
        i0, j0 = self.lattice.offset_in(outer)
        if not outer.contains_lattice(self.lattice):
            raise DomainError("target lattice does not contain this function's lattice")
        out = outer.zeros()
        out[i0:i0 + self.lattice.n, j0:j0 + self.lattice.n] = self.values
        return GranularFunction(out, outer)

    def __add__(self, other: "GranularFunction") -> "GranularFunction":
        _same(self.lattice, other.lattice)
        return GranularFunction(self.values + other.values, self.lattice, signed=True)

    def scaled(self, c: float) -> "GranularFunction":
        return GranularFunction(self.values * c, self.lattice, signed=True)

    def __repr__(self):
        return f"GranularFunction(n={self.lattice.n}, delta={self.delta:g}, mass={self.mass:.6g})"


class GridSet:
    """A union of lattice cells, stored as a boolean bitmap."""

    __slots__ = ("mask", "lattice")

    def __init__(self, mask, lattice: Lattice):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (lattice.n, lattice.n):
            raise DomainError("bitmap shape does not match lattice")
        object.__setattr__(self, "mask", _readonly(mask))
        object.__setattr__(self, "lattice", lattice)

    def __setattr__(self, name, value):
        raise AttributeError("GridSet is immutable")

    @classmethod
    def empty(cls, lattice: Lattice) -> "GridSet":
        return cls(lattice.zeros(bool), lattice)

    @classmethod
    def full(cls, lattice: Lattice) -> "GridSet":
        return cls(np.ones((lattice.n, lattice.n), bool), lattice)

    @classmethod
    def from_cubes(cls, cubes, lattice: Lattice) -> "GridSet":
        m = lattice.zeros(bool)
        for q in cubes:
            m[q.slices] = True
        return cls(m, lattice)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def measure(self) -> float:
        return self.count * self.lattice.cell_area

    def is_empty(self) -> bool:
        return not self.mask.any()

    def __or__(self, other):
        _same(self.lattice, other.lattice)
        return GridSet(self.mask | other.mask, self.lattice)

    def __and__(self, other):
        _same(self.lattice, other.lattice)
        return GridSet(self.mask & other.mask, self.lattice)

    def __sub__(self, other):
        _same(self.lattice, other.lattice)
        return GridSet(self.mask & ~other.mask, self.lattice)

    def __invert__(self):
        return GridSet(~self.mask, self.lattice)

    def __le__(self, other) -> bool:
        _same(self.lattice, other.lattice)
        return not np.any(self.mask & ~other.mask)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridSet):
            return NotImplemented
        return self.lattice == other.lattice and np.array_equal(self.mask, other.mask)

    __hash__ = None

    def embed(self, outer: Lattice) -> "GridSet":
        i0, j0 = self.lattice.offset_in(outer)
        if not outer.contains_lattice(self.lattice):
            raise DomainError("target lattice does not contain this set's lattice")
        out = outer.zeros(bool)
        out[i0:i0 + self.lattice.n, j0:j0 + self.lattice.n] = self.mask
        return GridSet(out, outer)

    def __repr__(self):
        return f"GridSet(n={self.lattice.n}, cells={self.count}, measure={self.measure:.6g})"


@lru_cache(maxsize=65536)
def _window(lat: Lattice, level: int, i: int, j: int) -> Lattice:
    cube = DyadicCube(lat, level, i, j)
    return Lattice(cube.cells, lat.delta, cube.corner)


def _same(a: Lattice, b: Lattice):
    if a != b:
        raise DomainError("operands live on different lattices")


def iterated_log(n: int, t: float) -> float:
    """Log^n(t) with Log(t) = log2(100 + t) and Log^n(t) = Log(100 + Log^{n-1}(t))."""
    if n < 1:
        raise DomainError("iterated_log needs n >= 1")
    if t < 0 or not math.isfinite(t):
        raise DomainError("iterated_log needs a finite t >= 0")
    v = math.log2(100.0 + t)
    for _ in range(n - 1):
        v = math.log2(100.0 + (100.0 + v))
    return v


def mass(f: GranularFunction) -> float:
    """The L^1 norm delta^d * sum(|values|)."""
    return float(np.abs(f.values).sum()) * f.lattice.cell_area


def block_reduce(a: np.ndarray, factor: int, how: str = "sum") -> np.ndarray:
    n = a.shape[0] // factor
    b = a.reshape(n, factor, n, factor)
    if how == "sum":
        return b.sum(axis=(1, 3))
    if how == "all":
        return b.all(axis=(1, 3))
    if how == "any":
        return b.any(axis=(1, 3))
    if how == "min":
        return b.min(axis=(1, 3))
    if how == "max":
        return b.max(axis=(1, 3))
    raise ValueError(how)


def pyramid(a: np.ndarray, how: str = "sum") -> list[np.ndarray]:
    """Per-level 2x2 reductions, index 0 = root (1x1), last = the input itself."""
    levels = [a]
    while levels[-1].shape[0] > 1:
        levels.append(block_reduce(levels[-1], 2, how))
    return levels[::-1]


def upsample(a: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return a
    return np.repeat(np.repeat(a, factor, axis=0), factor, axis=1)


def maximal_dyadic_cover(E: GridSet) -> list[DyadicCube]:
    """Maximal dyadic cubes contained in ``E``; they partition ``E``."""
    lat = E.lattice
    full = pyramid(E.mask, "all")
    cubes: list[DyadicCube] = []
    for level, grid in enumerate(full):
        keep = grid if level == 0 else grid & ~upsample(full[level - 1], 2)
        for i, j in zip(*np.nonzero(keep)):
            cubes.append(DyadicCube(lat, level, int(i), int(j)))
    return cubes


def cover_counts(E: GridSet) -> list[int]:
    """Number of maximal cover cubes at each level (vectorised, no cube objects)."""
    full = pyramid(E.mask, "all")
    out = [int(full[0].sum())]
    for level in range(1, len(full)):
        out.append(int(np.count_nonzero(full[level] & ~upsample(full[level - 1], 2))))
    return out


def length_of(E: GridSet) -> float:
    """Sum of sidelengths over the maximal dyadic cover of ``E``."""
    lat = E.lattice
    return sum(c * (lat.n >> level) * lat.delta for level, c in enumerate(cover_counts(E)))


def iter_cubes(lattice: Lattice, min_cells: int = 1) -> Iterator[DyadicCube]:
    """All dyadic cubes of the lattice, coarse to fine."""
    for level in range(lattice.depth + 1):
        if lattice.n >> level < min_cells:
            break
        m = 1 << level
        for i in range(m):
            for j in range(m):
                yield DyadicCube(lattice, level, i, j)
