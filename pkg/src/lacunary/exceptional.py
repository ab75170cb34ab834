"""Scale ladders, direction nets, heavy rectangles, cap exceptional sets, regimes.

Rectangles for direction ``phi`` live on one fixed grid centred at the origin:
long axis along the tangent t = (-sin phi, cos phi) with period c_i, short axis
along the normal n = (cos phi, sin phi) with period c_{i-1}.  A cell belongs to
the grid rectangle containing its centre, so grid rectangles partition the
cells and their masses add up to the total mass.

Caps attached to a direction are double arcs (both antipodal arcs around
+-phi), because a rectangle's short axis is unsigned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator

import numpy as np

from .density import DensityPiece, split_level_set
from .errors import ConfigError
from .grid import GranularFunction, GridSet, Lattice
from .spherical import (
    Direction, OrientedRect, circle_samples, equispaced_directions, minkowski_array,
    minkowski_local, net_count, paste, window_samples,
)

K1, K2, K3 = "K1", "K2", "K3"


def ilog2(x: float) -> float:
    """log2 clamped below at 1 (argument clamped at 2)."""
    return math.log2(max(x, 2.0))


def loglog(alpha: float) -> float:
    return ilog2(ilog2(1.0 / alpha))


def logloglog(alpha: float) -> float:
    return ilog2(loglog(alpha))


@dataclass(frozen=True)
class Knobs:
    C_stop: float = 2.0 ** -10
    C_width: float = 100.0
    C_dilate: float = 100.0
    C_iter: float = 100.0
    C_K2: float = 100.0

    def __post_init__(self):
        for name in ("C_stop", "C_width", "C_dilate", "C_iter", "C_K2"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.C_stop >= 1:
            raise ConfigError("C_stop must be < 1 or the ladder never stops")

    @classmethod
    def literal(cls) -> "Knobs":
        return cls()

    @classmethod
    def desk(cls) -> "Knobs":
        return cls(C_stop=2.0 ** -6, C_width=4.0, C_dilate=3.0, C_iter=2.0, C_K2=4.0)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("C_stop", "C_width", "C_dilate", "C_iter", "C_K2")}


@dataclass(frozen=True)
class ExceptionalConfig:
    alpha: float
    gamma: float
    k: int
    l_q: float
    M: float = 1.0
    d: int = 2
    knobs: Knobs = field(default_factory=Knobs)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not (self.gamma > 0 and self.l_q > 0 and self.M > 0):
            raise ConfigError("gamma, l(q) and M must be positive")

    @property
    def R_star(self) -> float:
        return max(self.l_q, (self.gamma / self.alpha) ** (1.0 / (self.d - 1)))

    def check_scale(self) -> "ExceptionalConfig":
        if 2.0 ** self.k < self.R_star * (1 - 1e-12):
            raise ConfigError(f"2^k = {2.0 ** self.k:g} is below R* = {self.R_star:g}")
        return self

    def with_M(self, M: float) -> "ExceptionalConfig":
        return replace(self, M=M)


# ---------------------------------------------------------------------------
# scale ladder

def _exact_log2(x: float) -> Fraction:
    return Fraction(math.log2(x))


@dataclass(frozen=True)
class ScaleLadder:
    """c_j = 2^{e_j}, e_{j+1} = (e_j + e_R) / 2, stopped at the first c_N >= C_stop R*."""
    exponents: tuple[Fraction, ...]
    e_R: Fraction

    @property
    def scales(self) -> list[float]:
        return [2.0 ** float(e) for e in self.exponents]

    @property
    def N(self) -> int:
        return len(self.exponents) - 1

    @property
    def R_star(self) -> float:
        return 2.0 ** float(self.e_R)

    def closed_form(self, j: int) -> Fraction:
        return self.e_R + (self.exponents[0] - self.e_R) / 2 ** j

    def __getitem__(self, j: int) -> float:
        return 2.0 ** float(self.exponents[j])

    def __len__(self):
        return len(self.exponents)


def ladder_from(gamma: float, R_star: float, C_stop: float, d: int = 2) -> ScaleLadder:
    e_R = _exact_log2(R_star)
    e = _exact_log2(gamma) / (d - 1)
    if e > e_R:
        raise ConfigError("c_0 exceeds R*")
    stop = _exact_log2(C_stop) + e_R
    exps = [e]
    while exps[-1] < stop:
        exps.append((exps[-1] + e_R) / 2)
    return ScaleLadder(tuple(exps), e_R)


def scale_ladder(cfg: ExceptionalConfig) -> ScaleLadder:
    cfg.check_scale()
    return ladder_from(cfg.gamma, cfg.R_star, cfg.knobs.C_stop, cfg.d)


def direction_net(c_hi: float, c_lo: float, d: int = 2) -> list[Direction]:
    """ceil(c_hi / c_lo) equispaced directions modulo pi."""
    if not c_lo < c_hi:
        raise ConfigError("direction net needs c_lo < c_hi")
    return equispaced_directions(net_count(c_hi, c_lo, d))


# ---------------------------------------------------------------------------
# heavy rectangles

@dataclass(frozen=True)
class PieceCells:
    """The support cells of a piece: global indices, centres and masses."""
    lattice: Lattice
    ij: np.ndarray
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray

    @classmethod
    def of(cls, f: GranularFunction) -> "PieceCells":
        lat = f.lattice
        i, j = np.nonzero(f.values)
        x = lat.origin[0] + (i + 0.5) * lat.delta
        y = lat.origin[1] + (j + 0.5) * lat.delta
        return cls(lat, np.stack([i, j], 1), x, y, f.values[i, j] * lat.cell_area)

    def __len__(self):
        return len(self.w)

    @property
    def total(self) -> float:
        return float(self.w.sum())


def rect_keys(x, y, phi: float, c_long: float, c_short: float):
    ct, st = math.cos(phi), math.sin(phi)
    u = -x * st + y * ct
    v = x * ct + y * st
    a = np.floor(u / c_long + 0.5).astype(np.int64)
    b = np.floor(v / c_short + 0.5).astype(np.int64)
    return a, b


def grid_rect(a: int, b: int, phi: float, c_long: float, c_short: float) -> OrientedRect:
    d = Direction(phi)
    cx, cy = a * c_long * d.tangent + b * c_short * d.vector
    return OrientedRect((float(cx), float(cy)), d, c_long, c_short)


def rect_masses(cells: PieceCells, phi: float, c_long: float, c_short: float):
    """(keys (R, 2), masses (R,), inverse (K,)) for the grid rectangles meeting the cells."""
    a, b = rect_keys(cells.x, cells.y, phi, c_long, c_short)
    keys, inv = np.unique(np.stack([a, b], 1), axis=0, return_inverse=True)
    inv = inv.ravel()
    return keys, np.bincount(inv, weights=cells.w, minlength=len(keys)), inv


def _heavy_ratio(masses, c_short, gamma):
    return masses / (c_short * gamma)


@dataclass(frozen=True)
class HeavyRectSet:
    direction: Direction
    i: int
    rects: list[OrientedRect]
    masses: np.ndarray = field(repr=False)
    keys: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.rects)


def heavy_rectangles(piece: DensityPiece | GranularFunction, phi, i: int, ladder: ScaleLadder,
                     cfg: ExceptionalConfig, cells: PieceCells | None = None) -> HeavyRectSet:
    """Grid rectangles c_i x c_{i-1} (short side along ``phi``) with mass >= c_{i-1} M gamma."""
    if not 1 <= i <= ladder.N:
        raise ConfigError(f"scale index {i} outside [1, {ladder.N}]")
    f = piece.f if isinstance(piece, DensityPiece) else piece
    cells = PieceCells.of(f) if cells is None else cells
    phi = phi.angle if isinstance(phi, Direction) else float(phi)
    c_hi, c_lo = ladder[i], ladder[i - 1]
    keys, masses, _ = rect_masses(cells, phi, c_hi, c_lo)
    sel = _heavy_ratio(masses, c_lo, cfg.gamma) >= cfg.M
    rects = [grid_rect(int(a), int(b), phi, c_hi, c_lo) for a, b in keys[sel]]
    return HeavyRectSet(Direction(phi), i, rects, masses[sel], keys[sel])


def cap_width(ladder: ScaleLadder, i: int, knobs: Knobs) -> float:
    return min(knobs.C_width * ladder[i - 1] / ladder[i], 2 * math.pi)


def cap_window(k: int, delta: float, phi: float, width: float) -> np.ndarray:
    """Sample indices of the double cap of ``width`` about +-phi on the circle 2^k."""
    return window_samples(2.0 ** k, delta, phi, width, double=True)


# ---------------------------------------------------------------------------
# exceptional sets

def expanded_lattice(lat: Lattice, factor: int = 2) -> Lattice:
    """A lattice ``factor`` times wider, centred on ``lat``."""
    n = lat.n * factor
    pad = (n - lat.n) // 2
    return Lattice(n, lat.delta, (lat.origin[0] - pad * lat.delta, lat.origin[1] - pad * lat.delta))


def _dilated_union(rects: list[OrientedRect], factor: float, lat: Lattice):
    """Rasterised union of the dilated rectangles as (local mask, i0, j0)."""
    parts = [R.dilate(factor).rasterize_local(lat) for R in rects]
    i0 = min(p[1] for p in parts)
    j0 = min(p[2] for p in parts)
    i1 = max(p[1] + p[0].shape[0] for p in parts)
    j1 = max(p[2] + p[0].shape[1] for p in parts)
    canvas = np.zeros((i1 - i0, j1 - j0), bool)
    for m, a, b in parts:
        canvas[a - i0:a - i0 + m.shape[0], b - j0:b - j0 + m.shape[1]] |= m
    return canvas, i0, j0


@dataclass
class ExceptionalResult:
    S: GridSet
    n_heavy: int
    per_scale: dict[int, int]     # scale index -> number of heavy rectangles
    clipped: bool = False

    @property
    def measure(self) -> float:
        return self.S.measure


def iter_heavy(piece, ladder: ScaleLadder, cfg: ExceptionalConfig,
               cells: PieceCells | None = None) -> Iterator[tuple[int, Direction, HeavyRectSet]]:
    f = piece.f if isinstance(piece, DensityPiece) else piece
    cells = PieceCells.of(f) if cells is None else cells
    if len(cells) == 0:
        return
    for i in range(1, ladder.N + 1):
        for phi in direction_net(ladder[i], ladder[i - 1], cfg.d):
            H = heavy_rectangles(f, phi, i, ladder, cfg, cells)
            if len(H):
                yield i, phi, H


def exceptional_set(piece, cfg: ExceptionalConfig, ladder: ScaleLadder | None = None,
                    ambient: Lattice | None = None, clip: bool = False,
                    cells: PieceCells | None = None) -> ExceptionalResult:
    """Union over scales i and directions of supp(cap_{i,phi} * chi_{union of dilated heavy R})."""
    f = piece.f if isinstance(piece, DensityPiece) else piece
    ladder = scale_ladder(cfg) if ladder is None else ladder
    if ambient is None:
        reach = 2.0 ** cfg.k + (1 + cfg.knobs.C_dilate) * ladder[ladder.N] + 2 * f.delta
        ambient = f.lattice.around(reach)
    lat = ambient
    out = lat.zeros(bool)
    _, offsets = circle_samples(2.0 ** cfg.k, lat.delta)
    n_heavy, per_scale, clipped = 0, {}, False
    for i, phi, H in iter_heavy(f, ladder, cfg, cells):
        n_heavy += len(H)
        per_scale[i] = per_scale.get(i, 0) + len(H)
        idx = cap_window(cfg.k, lat.delta, phi.angle, cap_width(ladder, i, cfg.knobs))
        canvas, i0, j0 = _dilated_union(H.rects, cfg.knobs.C_dilate, lat)
        offs = np.unique(offsets[idx], axis=0)
        loc, lo = minkowski_local(canvas, offs)
        clipped |= paste(out, loc, i0 + int(lo[0]), j0 + int(lo[1]), "or", clip)
    return ExceptionalResult(GridSet(out, lat), n_heavy, per_scale, clipped)


def size_lemma_ratio(piece: DensityPiece, cfg: ExceptionalConfig, result: ExceptionalResult | None = None,
                     **kw) -> float | None:
    """|S| M / (2^{k(d-1)} lambda); None when the piece has zero length."""
    if piece.length == 0:
        return None
    res = exceptional_set(piece, cfg, **kw) if result is None else result
    return res.measure * cfg.M / (2.0 ** (cfg.k * (cfg.d - 1)) * piece.length)


# ---------------------------------------------------------------------------
# regimes

def regime_partition(k: int, cfg: ExceptionalConfig) -> str:
    """K1 below the natural scale, K2 in the band above it, K3 beyond."""
    d = cfg.d
    g = math.log2(cfg.gamma / cfg.alpha)
    low = max(math.log2(cfg.l_q) * (d - 1), g)
    kk = k * (d - 1)
    if kk < low:
        return K1
    if kk <= g + cfg.knobs.C_K2 * loglog(cfg.alpha):
        return K2
    return K3


def height_parameter(k: int, gamma: float, alpha: float, d: int = 2) -> float:
    """M used for the K2 exceptional set: 2^{k(d-1)} alpha / gamma * loglog(1/alpha)."""
    return 2.0 ** (k * (d - 1)) * alpha / gamma * loglog(alpha)


@dataclass
class RegimeRecord:
    q: tuple[int, int, int]
    k: int
    gamma: float
    regime: str
    M: float | None
    n_scales: int
    n_heavy: int
    measure: float


@dataclass
class RegimeReport:
    A: GridSet
    mass: float
    alpha: float
    records: list[RegimeRecord]
    clipped: bool

    @property
    def ratio(self) -> float | None:
        """|A| alpha / ||f||_1."""
        if self.mass == 0:
            return None
        return self.A.measure * self.alpha / self.mass


def regime_exceptional(f: GranularFunction, alpha: float, ks, knobs: Knobs | None = None,
                       ambient: Lattice | None = None, split=None,
                       per_record: bool = False) -> RegimeReport:
    """A = union over Whitney cubes q, pieces gamma (j >= 1) and k of
    supp(sigma_k * f_q^gamma) for K1, S at the K2 height parameter for K2, nothing for K3.

    K1 supports are unioned per k before the Minkowski sum; their per-record
    measures are only computed when ``per_record`` is set."""
    knobs = Knobs() if knobs is None else knobs
    lat = f.lattice
    amb = expanded_lattice(lat) if ambient is None else ambient
    A = amb.zeros(bool)
    records: list[RegimeRecord] = []
    clipped = False
    k1_support = {k: lat.zeros(bool) for k in ks}
    _, splits = split_level_set(f, alpha) if split is None else split
    for cs in splits:
        q = cs.q
        qid = (q.level, q.i, q.j)
        for piece in cs.pieces[1:]:
            if piece.mass == 0:
                continue
            cells = None
            for k in ks:
                cfg = ExceptionalConfig(alpha, piece.gamma, k, q.side, 1.0, 2, knobs)
                reg = regime_partition(k, cfg)
                if reg == K1:
                    supp = piece.f.support().embed(lat).mask
                    k1_support[k] |= supp
                    measure = float("nan")
                    if per_record:
                        measure = _k1_part(supp, k, lat, amb).sum() * lat.cell_area
                    records.append(RegimeRecord(qid, k, piece.gamma, reg, None, 0, 0, float(measure)))
                elif reg == K2:
                    cells = PieceCells.of(piece.f) if cells is None else cells
                    cfg = cfg.with_M(height_parameter(k, piece.gamma, alpha))
                    ladder = scale_ladder(cfg)
                    if ladder.N == 0:  # no scale pairs, so no rectangles and S is empty
                        records.append(RegimeRecord(qid, k, piece.gamma, reg, cfg.M, 0, 0, 0.0))
                        continue
                    res = exceptional_set(piece, cfg, ladder, amb, clip=True, cells=cells)
                    clipped |= res.clipped
                    A |= res.S.mask
                    records.append(RegimeRecord(qid, k, piece.gamma, reg, cfg.M, ladder.N,
                                                res.n_heavy, res.measure))
                else:
                    records.append(RegimeRecord(qid, k, piece.gamma, reg, None, 0, 0, 0.0))
    for k, supp in k1_support.items():
        if supp.any():
            A |= _k1_part(supp, k, lat, amb)
    return RegimeReport(GridSet(A, amb), f.mass, alpha, records, clipped)


def _k1_part(mask: np.ndarray, k: int, lat: Lattice, amb: Lattice) -> np.ndarray:
    _, offs = circle_samples(2.0 ** k, lat.delta)
    big = GridSet(mask, lat).embed(amb).mask
    return minkowski_array(big, np.unique(offs, axis=0), clip=True)
