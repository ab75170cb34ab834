"""Discretised circle and cap measures, convolution, and the sigma_k * sigma_k kernel.

A circle of radius r is sampled at P equispaced angles 2*pi*p/P (P a multiple
of 8, at least 16*pi*r/delta) and every sample is binned to the nearest
integer cell displacement.  Caps are subsets of these samples, so every cap
measure is literally a restriction of the circle measure; that is what makes
the height decomposition telescope exactly.

Convolution convention: ``(mu * f)[c] = sum_a w_a f[c - a]`` over atoms with
integer displacement ``a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import ConfigError, DomainOverflowError, ResolutionError
from .grid import GranularFunction, GridSet, Lattice

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# sampling

def n_samples(radius: float, delta: float) -> int:
    p = math.ceil(16.0 * math.pi * radius / delta)
    return 8 * math.ceil(p / 8)


@lru_cache(maxsize=64)
def circle_samples(radius: float, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample angles and their binned integer offsets, exactly symmetric under
    the eight lattice symmetries."""
    P = n_samples(radius, delta)
    q = P // 8
    p = np.arange(q + 1)
    th = TWO_PI * p / P
    bx = np.rint(radius * np.cos(th) / delta).astype(np.int64)
    by = np.rint(radius * np.sin(th) / delta).astype(np.int64)
    x = np.empty(P, np.int64)
    y = np.empty(P, np.int64)
    x[: q + 1], y[: q + 1] = bx, by
    # second octant by the diagonal reflection, then the other axes
    k = np.arange(q + 1, 2 * q + 1)
    x[k], y[k] = y[2 * q - k], x[2 * q - k]
    k = np.arange(2 * q + 1, 4 * q + 1)
    x[k], y[k] = -x[4 * q - k], y[4 * q - k]
    k = np.arange(4 * q + 1, P)
    x[k], y[k] = x[P - k], -y[P - k]
    angles = TWO_PI * np.arange(P) / P
    offsets = np.stack([x, y], axis=1)
    angles.flags.writeable = False
    offsets.flags.writeable = False
    return angles, offsets


def angular_distance(theta, normal: float, double: bool = False):
    """Distance on the circle (or on the circle mod pi when ``double``)."""
    period = math.pi if double else TWO_PI
    d = np.mod(np.asarray(theta) - normal, period)
    return np.minimum(d, period - d)


def window_samples(radius: float, delta: float, normal: float, width: float,
                   double: bool = False) -> np.ndarray:
    """Indices of the samples in the closed arc of angular ``width`` about
    ``normal`` (both antipodal arcs when ``double``).  Never empty: an arc
    narrower than the sample spacing keeps its nearest sample(s)."""
    angles, _ = circle_samples(radius, delta)
    dist = angular_distance(angles, normal, double)
    idx = np.nonzero(dist <= width / 2 + 1e-12)[0]
    if idx.size == 0:
        dmin = dist.min()
        idx = np.nonzero(dist <= dmin + 1e-12)[0]
    return idx


def _aggregate(offsets: np.ndarray, weights: np.ndarray):
    uniq, inv = np.unique(offsets, axis=0, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=weights, minlength=len(uniq))
    return uniq.astype(np.int64), w


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class Direction:
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", float(self.angle) % TWO_PI)

    @property
    def vector(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    @property
    def tangent(self) -> np.ndarray:
        return np.array([-math.sin(self.angle), math.cos(self.angle)])


@dataclass(frozen=True)
class DiscreteMeasure:
    offsets: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    delta: float
    radius: float
    kind: str  # "circle" | "cap" | "caps"
    normal: float | None = None
    width: float | None = None
    total_mass: float = 0.0

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    def max_offset(self) -> int:
        return int(np.abs(self.offsets).max()) if self.n_atoms else 0


def _measure(radius, delta, idx, scale, kind, normal=None, width=None) -> DiscreteMeasure:
    _, offs = circle_samples(radius, delta)
    w = np.full(len(idx), scale)
    o, w = _aggregate(offs[idx], w)
    o.flags.writeable = False
    w.flags.writeable = False
    return DiscreteMeasure(o, w, delta, radius, kind, normal, width, float(w.sum()))


def _check_resolvable(radius: float, delta: float):
    if radius < 8 * delta:
        raise ResolutionError(f"radius {radius:g} < 8*delta = {8 * delta:g}")


def circle_measure(k: int, delta: float) -> DiscreteMeasure:
    """sigma_k: the normalised circle measure of radius 2^k."""
    r = 2.0 ** k
    _check_resolvable(r, delta)
    P = n_samples(r, delta)
    return _measure(r, delta, np.arange(P), 1.0 / P, "circle")


def cap_measure(k: int, normal, width: float, delta: float, double: bool = False) -> DiscreteMeasure:
    """Uniform measure on the arc within ``width/2`` of ``normal``, total mass
    exactly ``width / (2 pi)`` (twice that when ``double``)."""
    r = 2.0 ** k
    _check_resolvable(r, delta)
    if not 0 < width <= TWO_PI:
        raise ConfigError("cap width must lie in (0, 2 pi]")
    if r * width < 4 * delta:
        raise ResolutionError(f"cap arc length {r * width:g} < 4*delta")
    phi = normal.angle if isinstance(normal, Direction) else float(normal)
    if width >= TWO_PI:
        return _measure(r, delta, np.arange(n_samples(r, delta)), 1.0 / n_samples(r, delta),
                        "cap", phi, width)
    idx = window_samples(r, delta, phi, width, double)
    target = (2 if double else 1) * width / TWO_PI
    return _measure(r, delta, idx, target / len(idx), "cap", phi, width)


def restricted_circle(k: int, delta: float, sample_idx) -> DiscreteMeasure:
    """sigma_k restricted to a subset of its samples (weights stay 1/P)."""
    r = 2.0 ** k
    P = n_samples(r, delta)
    return _measure(r, delta, np.asarray(sample_idx, dtype=np.int64), 1.0 / P, "caps")


# ---------------------------------------------------------------------------
# local convolution engine

def _choose_direct(n_atoms: int, arr_size: int, out_size: int) -> bool:
    return n_atoms * arr_size <= 6 * out_size * max(math.log2(out_size + 2), 1.0)


def conv_local(arr: np.ndarray, offsets: np.ndarray, weights: np.ndarray,
               method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Full convolution of ``arr`` with an atom list.

    Returns ``(out, lo)``; ``out[m]`` is the value at index ``m + lo`` relative to
    ``arr[0, 0]``.  The FFT path is cleaned so its support is exactly the
    Minkowski sum of supports and it is nonnegative when the inputs are.
    """
    lo = offsets.min(axis=0)
    span = offsets.max(axis=0) - lo
    shape = (arr.shape[0] + span[0], arr.shape[1] + span[1])
    if method == "auto":
        method = "direct" if _choose_direct(len(weights), arr.size, shape[0] * shape[1]) else "fft"
    if method == "direct":
        out = np.zeros(shape)
        h, w = arr.shape
        for (a, b), wt in zip(offsets - lo, weights):
            out[a:a + h, b:b + w] += wt * arr
        return out, lo
    if method != "fft":
        raise ValueError(method)
    kern = np.zeros((span[0] + 1, span[1] + 1))
    np.add.at(kern, tuple((offsets - lo).T), weights)
    out = signal.fftconvolve(arr, kern, mode="full")
    supp, _ = minkowski_local(arr != 0, offsets)
    out[~supp] = 0.0
    if arr.min() >= 0 and weights.min() >= 0:
        np.maximum(out, 0.0, out=out)
    return out, lo


def minkowski_local(mask: np.ndarray, offsets: np.ndarray,
                    method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Boolean Minkowski sum of a local bitmap with a set of integer offsets."""
    lo = offsets.min(axis=0)
    span = offsets.max(axis=0) - lo
    shape = (mask.shape[0] + span[0], mask.shape[1] + span[1])
    if method == "auto":
        method = "direct" if _choose_direct(len(offsets), mask.size // 4, shape[0] * shape[1]) else "fft"
    if method == "direct":
        out = np.zeros(shape, bool)
        h, w = mask.shape
        for a, b in offsets - lo:
            out[a:a + h, b:b + w] |= mask
        return out, lo
    kern = np.zeros((span[0] + 1, span[1] + 1))
    kern[tuple((offsets - lo).T)] = 1.0
    out = signal.fftconvolve(mask.astype(float), kern, mode="full") > 0.5
    return out, lo


def bbox(mask: np.ndarray):
    """(i0, i1, j0, j1) half-open bounding box of the nonzero entries, or None."""
    rows = np.nonzero(mask.any(axis=1))[0]
    if rows.size == 0:
        return None
    cols = np.nonzero(mask.any(axis=0))[0]
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def paste(target: np.ndarray, local: np.ndarray, i0: int, j0: int, how: str = "add",
          clip: bool = False) -> bool:
    """Adds / ORs ``local`` into ``target`` at (i0, j0).  Returns True when
    something nonzero fell outside ``target`` (clipped or an overflow)."""
    n0, n1 = target.shape
    a0, b0 = max(i0, 0), max(j0, 0)
    a1, b1 = min(i0 + local.shape[0], n0), min(j0 + local.shape[1], n1)
    inner = local[a0 - i0:a1 - i0, b0 - j0:b1 - j0] if a1 > a0 and b1 > b0 else local[:0, :0]
    lost = bool(np.count_nonzero(local) != np.count_nonzero(inner))
    if lost and not clip:
        raise DomainOverflowError("result extends beyond the lattice; pad the domain")
    if inner.size:
        if how == "add":
            target[a0:a1, b0:b1] += inner
        else:
            target[a0:a1, b0:b1] |= inner
    return lost


def convolve_array(mu: DiscreteMeasure, values: np.ndarray, method: str = "auto",
                   clip: bool = False) -> np.ndarray:
    out = np.zeros(values.shape)
    box = bbox(values != 0)
    if box is None or mu.n_atoms == 0:
        return out
    i0, i1, j0, j1 = box
    loc, lo = conv_local(values[i0:i1, j0:j1], mu.offsets, mu.weights, method)
    paste(out, loc, i0 + int(lo[0]), j0 + int(lo[1]), "add", clip)
    return out


def convolve(mu: DiscreteMeasure, f: GranularFunction, method: str = "auto") -> GranularFunction:
    """``mu * f`` on f's lattice; raises DomainOverflowError if it would not fit."""
    if mu.delta != f.delta:
        raise ConfigError("measure and function have different grains")
    return GranularFunction(convolve_array(mu, f.values, method), f.lattice)


def support_of_convolution(mu: DiscreteMeasure, s: GridSet, clip: bool = False) -> GridSet:
    return GridSet(minkowski_array(s.mask, mu.offsets, clip), s.lattice)


def minkowski_array(mask: np.ndarray, offsets: np.ndarray, clip: bool = False) -> np.ndarray:
    out = np.zeros(mask.shape, bool)
    box = bbox(mask)
    if box is None or len(offsets) == 0:
        return out
    i0, i1, j0, j1 = box
    loc, lo = minkowski_local(mask[i0:i1, j0:j1], offsets)
    paste(out, loc, i0 + int(lo[0]), j0 + int(lo[1]), "or", clip)
    return out


# ---------------------------------------------------------------------------
# the autocorrelation kernel

def kernel_lattice(half_cells: int, delta: float) -> Lattice:
    """Lattice centred on the origin: cell (i, j) holds the kernel value at the
    displacement of its lower-left corner, ``((i, j) - n/2) * delta``."""
    n = 1 << max(1, math.ceil(math.log2(2 * half_cells + 2)))
    return Lattice(n, delta, (-(n // 2) * delta, -(n // 2) * delta))


def kernel_displacements(kern: GranularFunction) -> tuple[np.ndarray, np.ndarray]:
    lat = kern.lattice
    t = (np.arange(lat.n) - lat.n // 2) * lat.delta
    return np.meshgrid(t, t, indexing="ij")


def autocorrelation_kernel(k: int, delta: float) -> GranularFunction:
    """Density of sigma_k * sigma_k (mass per cell divided by delta^2)."""
    mu = circle_measure(k, delta)
    lo = mu.offsets.min(axis=0)
    span = mu.offsets.max(axis=0) - lo
    K = np.zeros((span[0] + 1, span[1] + 1))
    np.add.at(K, tuple((mu.offsets - lo).T), mu.weights)
    KK = signal.fftconvolve(K, K, mode="full")
    supp = signal.fftconvolve((K > 0).astype(float), (K > 0).astype(float), mode="full") > 0.5
    KK = np.where(supp, np.maximum(KK, 0.0), 0.0)
    KK *= 1.0 / KK.sum()  # undo FFT rounding drift on the total
    lo2 = 2 * lo
    half = int(max(np.abs(lo2).max(), np.abs(lo2 + np.array(KK.shape) - 1).max()))
    lat = kernel_lattice(half, delta)
    vals = lat.zeros()
    c = lat.n // 2
    vals[c + lo2[0]:c + lo2[0] + KK.shape[0], c + lo2[1]:c + lo2[1] + KK.shape[1]] = KK
    return GranularFunction(vals / lat.cell_area, lat)


def pointwise_bound_ratio(k: int, delta: float, kern: GranularFunction | None = None) -> float:
    """max of K(x) * 2^{k(d-1)} * |x| over cells with 8*delta <= |x| <= 2^k."""
    kern = autocorrelation_kernel(k, delta) if kern is None else kern
    DX, DY = kernel_displacements(kern)
    r = np.hypot(DX, DY)
    sel = (r >= 8 * delta) & (r <= 2.0 ** k)
    return float((kern.values[sel] * (2.0 ** k) * r[sel]).max())


# ---------------------------------------------------------------------------
# rectangles

@dataclass(frozen=True)
class OrientedRect:
    """A rectangle whose short side is parallel to ``direction``."""
    center: tuple[float, float]
    direction: Direction
    long: float
    short: float

    def __post_init__(self):
        if self.short > self.long * (1 + 1e-12):
            raise ConfigError("short side exceeds long side")

    def dilate(self, factor: float) -> "OrientedRect":
        return OrientedRect(self.center, self.direction, self.long * factor, self.short * factor)

    def contains(self, x, y, tol: float = 1e-12):
        """Closed membership test for points (arrays allowed)."""
        n, t = self.direction.vector, self.direction.tangent
        dx = np.asarray(x) - self.center[0]
        dy = np.asarray(y) - self.center[1]
        u = dx * t[0] + dy * t[1]
        v = dx * n[0] + dy * n[1]
        s = tol * self.long
        return (np.abs(u) <= self.long / 2 + s) & (np.abs(v) <= self.short / 2 + s)

    def corners(self) -> np.ndarray:
        n, t = self.direction.vector, self.direction.tangent
        c = np.asarray(self.center)
        return np.array([c + a * self.long / 2 * t + b * self.short / 2 * n
                         for a in (-1, 1) for b in (-1, 1)])

    def rasterize_local(self, lattice: Lattice):
        """(mask, i0, j0): cells of ``lattice``-addressing whose centers lie in the
        rectangle, over the rectangle's bounding box (may extend past the lattice)."""
        d = lattice.delta
        cs = self.corners()
        ox, oy = lattice.origin
        i0 = math.floor((cs[:, 0].min() - ox) / d - 0.5)
        i1 = math.ceil((cs[:, 0].max() - ox) / d - 0.5) + 1
        j0 = math.floor((cs[:, 1].min() - oy) / d - 0.5)
        j1 = math.ceil((cs[:, 1].max() - oy) / d - 0.5) + 1
        xs = ox + (np.arange(i0, i1) + 0.5) * d
        ys = oy + (np.arange(j0, j1) + 0.5) * d
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return self.contains(X, Y), i0, j0

    def rasterize(self, lattice: Lattice, clip: bool = True) -> GridSet:
        m, i0, j0 = self.rasterize_local(lattice)
        out = lattice.zeros(bool)
        paste(out, m, i0, j0, "or", clip)
        return GridSet(out, lattice)


def _as_scales(ladder) -> list[float]:
    return list(getattr(ladder, "scales", ladder))


def net_count(c_hi: float, c_lo: float, d: int = 2) -> int:
    return max(1, math.ceil((c_hi / c_lo) ** (d - 1) - 1e-9))


def dominate_kernel(ladder, k: int, delta: float, d: int = 2) -> list[tuple[float, list[OrientedRect]]]:
    """Origin-centred rectangle families whose weighted indicator sum dominates
    2^{-k(d-1)} |x|^{-1} on the annulus covered by the ladder."""
    c = _as_scales(ladder)
    if any(b <= a for a, b in zip(c, c[1:])):
        raise ConfigError("scale ladder must be strictly increasing")
    out = []
    for i in range(1, len(c)):
        count = net_count(c[i], c[i - 1], d)
        w = 2.0 ** (-k * (d - 1)) * c[i] ** (-(d - 1)) * c[i - 1] ** (d - 2)
        rects = [OrientedRect((0.0, 0.0), Direction(math.pi * m / count), c[i], c[i - 1])
                 for m in range(count)]
        out.append((w, rects))
    return out


def domination_sum(terms, x, y) -> np.ndarray:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    total = np.zeros(np.broadcast(x, y).shape)
    for w, rects in terms:
        for R in rects:
            total += w * R.contains(x, y)
    return total


def domination_constant(ladder, k: int, delta: float, r_lo: float | None = None,
                        r_hi: float | None = None, n_r: int = 64, n_theta: int = 256,
                        d: int = 2) -> float:
    """Smallest C with 2^{-k(d-1)}|x|^{-1} <= C * (rectangle sum) on a polar
    sample of the annulus [r_lo, r_hi] (default [c_0, c_N / 4])."""
    c = _as_scales(ladder)
    terms = dominate_kernel(c, k, delta, d)
    r_lo = c[0] if r_lo is None else r_lo
    r_hi = c[-1] / 4 if r_hi is None else r_hi
    r = np.geomspace(r_lo, r_hi, n_r)
    th = (np.arange(n_theta) + 0.5) * TWO_PI / n_theta
    R, T = np.meshgrid(r, th, indexing="ij")
    X, Y = R * np.cos(T), R * np.sin(T)
    lhs = 2.0 ** (-k * (d - 1)) / R
    rhs = domination_sum(terms, X, Y)
    with np.errstate(divide="ignore"):
        ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.inf)
    return float(ratio.max())


def equispaced_directions(count: int) -> list[Direction]:
    return [Direction(math.pi * m / count) for m in range(count)]


def directions_for(scales: Sequence[float], i: int, d: int = 2) -> list[Direction]:
    return equispaced_directions(net_count(scales[i], scales[i - 1], d))
