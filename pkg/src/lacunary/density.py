"""Splitting f restricted to a Whitney cube into critical-density pieces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, DomainError, InconsistencyError
from .grid import DyadicCube, GranularFunction, GridSet, length_of, pyramid, upsample


@dataclass(frozen=True)
class DensityLadder:
    alpha: float
    l_q: float
    d: int
    exponents: tuple[int, ...]

    @property
    def gammas(self) -> list[float]:
        return [2.0 ** e for e in self.exponents]

    @property
    def N(self) -> int:
        return len(self.exponents) - 1

    def __len__(self):
        return len(self.exponents)


def gamma_ladder(alpha: float, l_q: float, d: int = 2) -> DensityLadder:
    """All dyadic gamma in [alpha^2 l_q^{d-1}, l_q^{d-1}], increasing."""
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if l_q <= 0:
        raise DomainError("cube side must be positive")
    lo = math.log2(alpha * alpha * l_q ** (d - 1))
    hi = math.log2(l_q ** (d - 1))
    e_lo = math.ceil(lo - 1e-12)
    e_hi = math.floor(hi + 1e-12)
    return DensityLadder(alpha, l_q, d, tuple(range(e_lo, e_hi + 1)))


@dataclass(frozen=True)
class DensityPiece:
    j: int
    gamma: float
    f: GranularFunction = field(repr=False)
    support: GridSet = field(repr=False)
    length: float
    q: DyadicCube

    @cached_property
    def mass(self) -> float:
        return self.f.mass

    def on_lattice(self) -> GranularFunction:
        """The piece on q's (global) lattice."""
        return self.f.embed(self.q.lattice)


def _excise(r: np.ndarray, gamma: float, side: float, delta: float) -> np.ndarray:
    """Coarse-to-fine: mark the cubes (inside the window) whose current residual
    mass is >= gamma * side.  Returns the union of marked cubes as a bitmap."""
    n = r.shape[0]
    sums = pyramid(r, "sum")
    area = delta * delta
    union = np.zeros((1, 1), bool)
    for level, s in enumerate(sums):
        if level:
            union = upsample(union, 2)
        l_Q = side / (1 << level)
        ok = (s * area >= gamma * l_Q) & ~union
        union = union | ok
    return union if union.shape[0] == n else upsample(union, n // union.shape[0])


def decompose(f_q: GranularFunction, q: DyadicCube, ladder: DensityLadder) -> list[DensityPiece]:
    """Pieces j = 0..N; piece j >= 1 collects the residual on cubes of density
    >= gamma_j (scanned from the top density down), piece 0 is what remains.

    ``f_q`` may live on q's lattice (and must then vanish off q) or on q's own
    window lattice.  The pieces live on the window lattice."""
    lat = q.lattice
    if f_q.lattice == lat:
        outside = f_q.values.copy()
        outside[q.slices] = 0
        if outside.any():
            raise DomainError("f_q is not supported in q")
        residual = np.array(f_q.values[q.slices], dtype=float)
    elif f_q.lattice == lat.window(q):
        residual = np.array(f_q.values, dtype=float)
    else:
        raise DomainError("f_q lives neither on q's lattice nor on q's window")
    gammas = ladder.gammas
    pieces: list[DensityPiece] = []
    excised = np.zeros_like(residual, dtype=bool)
    for j in range(ladder.N, 0, -1):
        if not residual.any():
            E = np.zeros_like(excised)
            pieces.append(_piece(j, gammas[j], residual, E, q))
            continue
        E = _excise(residual, gammas[j], q.side, lat.delta)
        pieces.append(_piece(j, gammas[j], np.where(E, residual, 0.0), E, q))
        residual = np.where(E, 0.0, residual)
        excised |= E
    pieces.append(_piece(0, gammas[0], residual, ~excised, q))
    return pieces[::-1]


def _piece(j, gamma, local_vals, local_mask, q) -> DensityPiece:
    win = q.lattice.window(q)
    S = GridSet(local_mask, win)
    return DensityPiece(j, gamma, GranularFunction.trusted(local_vals, win), S,
                        length_of(S) if local_mask.any() else 0.0, q)


@dataclass(frozen=True)
class WidthReport:
    ratios: list[float]       # r_j = mass / (gamma_j lambda_j); index 0 is the one-sided ratio
    local: list[float]        # w_j = max_Q mass_Q / (gamma_j l(Q)) over dyadic Q inside q

    @property
    def r_min(self) -> float:
        vals = [r for r in self.ratios[1:] if r > 0]
        return min(vals) if vals else float("nan")

    @property
    def r_max(self) -> float:
        vals = [r for r in self.ratios[1:] if r > 0]
        return max(vals) if vals else float("nan")

    @property
    def w_max(self) -> float:
        return max(self.local) if self.local else 0.0


def local_density(piece: DensityPiece) -> float:
    """max over dyadic Q inside q of (integral over Q of the piece) / (gamma l(Q))."""
    q = piece.q
    sums = pyramid(piece.f.values, "sum")
    area = q.lattice.delta ** 2
    best = 0.0
    for level, s in enumerate(sums):
        l_Q = q.side / (1 << level)
        best = max(best, float(s.max()) * area / (piece.gamma * l_Q))
    return best


def verify_widths(pieces: list[DensityPiece]) -> WidthReport:
    ratios, local = [], []
    for p in pieces:
        m = p.mass
        if m == 0:
            ratios.append(0.0)
        elif p.length == 0:
            raise InconsistencyError(f"piece {p.j} has mass {m} but zero length")
        else:
            ratios.append(m / (p.gamma * p.length))
        local.append(local_density(p))
    return WidthReport(ratios, local)


def reconstruct(pieces: list[DensityPiece]) -> GranularFunction:
    total = pieces[0].f.values.copy()
    for p in pieces[1:]:
        total += p.f.values
    return GranularFunction(total, pieces[0].f.lattice)


@dataclass(frozen=True)
class CubeSplit:
    """One Whitney cube of {M_HL f > alpha} with its density pieces."""
    q: DyadicCube
    dist: float
    ladder: DensityLadder
    pieces: list[DensityPiece] = field(repr=False)


def split_level_set(f: GranularFunction, alpha: float, d: int = 2):
    """Omega = {dyadic M_HL f > alpha}, its Whitney cubes, and the density pieces of
    f chi_q for every Whitney cube q.  Returns (Omega, [CubeSplit])."""
    from .cz import whitney
    from .maximal import hardy_littlewood, superlevel

    omega = superlevel(hardy_littlewood(f), alpha)
    if omega.count == omega.lattice.n ** 2:
        raise DomainError("level set fills the whole lattice; pad the domain")
    out = []
    for wc in whitney(omega):
        q = wc.cube
        ladder = gamma_ladder(alpha, q.side, d)
        out.append(CubeSplit(q, wc.dist, ladder, decompose(f.restrict(q), q, ladder)))
    return omega, out
