"""Whitney decomposition of a level set and the polynomial projection / bad part."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DomainError
from .grid import DyadicCube, GranularFunction, GridSet, pyramid, upsample


# ---------------------------------------------------------------------------
# Whitney

@dataclass(frozen=True)
class WhitneyCube:
    cube: DyadicCube
    dist: float
    floor: bool = False  # a single grain cell that could not meet diam <= dist

    @property
    def side(self) -> float:
        return self.cube.side

    @property
    def diam(self) -> float:
        return self.cube.diam


def gap_distance(omega: GridSet) -> np.ndarray:
    """Per cell, the Euclidean distance from the closed cell to the closed union of
    complement cells (0 for complement cells and their neighbours)."""
    comp = ~omega.mask
    if not comp.any():
        raise DomainError("Whitney decomposition needs a nonempty complement")
    grown = ndimage.binary_dilation(comp, structure=np.ones((3, 3), bool))
    # centre-to-centre distance to the dilated set equals the square-to-square gap
    return ndimage.distance_transform_edt(~grown) * omega.lattice.delta


def whitney(omega: GridSet) -> list[WhitneyCube]:
    """Maximal dyadic cubes Q of omega with diam(Q) <= dist(Q, complement),
    coarse to fine; grain cells that fail the lower bound are kept and flagged.

    The complement is the rest of the lattice; nothing outside it is considered.
    """
    lat = omega.lattice
    if not omega.mask.any():
        return []
    dist = gap_distance(omega)
    inside = pyramid(omega.mask, "all")
    dmin = pyramid(dist, "min")
    out: list[WhitneyCube] = []
    covered = np.zeros((1, 1), bool)
    for level in range(lat.depth + 1):
        if level:
            covered = upsample(covered, 2)
        side = (lat.n >> level) * lat.delta
        diam = side * math.sqrt(2.0)
        ok = inside[level] & ~covered
        if level < lat.depth:
            ok &= dmin[level] >= diam * (1 - 1e-12)
        for i, j in zip(*np.nonzero(ok)):
            d = float(dmin[level][i, j])
            out.append(WhitneyCube(DyadicCube(lat, level, int(i), int(j)), d,
                                   floor=d < diam * (1 - 1e-12)))
        covered = covered | ok
    return out


def whitney_to_csv(cubes: list[WhitneyCube], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "i", "j", "dist"])
        for c in cubes:
            w.writerow([c.cube.level, c.cube.i, c.cube.j, repr(c.dist)])
    return path


# ---------------------------------------------------------------------------
# polynomial projection

def _monomial_moment(p: int) -> float:
    """Integral of t^p over [-1/2, 1/2]."""
    return 0.0 if p % 2 else 0.5 ** p / (p + 1)


@dataclass(frozen=True)
class PolyBasis:
    """Orthonormal polynomials of degree <= D on [-1/2, 1/2]^2 (normalised Lebesgue),
    as a coefficient table over graded-lex monomials."""
    degree: int
    exponents: tuple[tuple[int, int], ...]
    coeffs: np.ndarray

    @classmethod
    def build(cls, degree: int = 2) -> "PolyBasis":
        return _basis(degree)

    def __len__(self):
        return len(self.exponents)

    def gram(self) -> np.ndarray:
        G = _monomial_gram(self.exponents)
        return self.coeffs @ G @ self.coeffs.T

    def monomials(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.stack([u ** a * v ** b for a, b in self.exponents], axis=-1)

    def evaluate(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Values of every basis polynomial, shape ``u.shape + (len(self),)``."""
        return self.monomials(u, v) @ self.coeffs.T


def _monomial_gram(exps) -> np.ndarray:
    m = len(exps)
    G = np.empty((m, m))
    for r, (a, b) in enumerate(exps):
        for s, (c, d) in enumerate(exps):
            G[r, s] = _monomial_moment(a + c) * _monomial_moment(b + d)
    return G


@lru_cache(maxsize=16)
def _basis(degree: int) -> PolyBasis:
    if degree < 0:
        raise DomainError("polynomial degree must be >= 0")
    exps = tuple((t - b, b) for t in range(degree + 1) for b in range(t + 1))
    L = np.linalg.cholesky(_monomial_gram(exps))
    C = np.linalg.solve(L, np.eye(len(exps)))
    C.flags.writeable = False
    return PolyBasis(degree, exps, C)


def local_coords(q: DyadicCube) -> tuple[np.ndarray, np.ndarray]:
    """(x - x_q) / l(q) at the cell centres of q."""
    m = q.cells
    t = (np.arange(m) + 0.5) / m - 0.5
    return np.meshgrid(t, t, indexing="ij")


@lru_cache(maxsize=64)
def _discrete_frame(cells: int, degree: int) -> np.ndarray:
    """Orthonormal (in the cell-average inner product) frame spanning the degree-D
    polynomials sampled at the cell centres of a cube with ``cells`` per side."""
    t = (np.arange(cells) + 0.5) / cells - 0.5
    U, V = np.meshgrid(t, t, indexing="ij")
    B = _basis(degree).evaluate(U, V).reshape(cells * cells, -1)
    u, s, _ = np.linalg.svd(B, full_matrices=False)
    rank = int(np.count_nonzero(s > s[0] * 1e-10))
    Q = u[:, :rank].copy()
    Q.flags.writeable = False
    return Q


def _project_block(h: np.ndarray, degree: int) -> np.ndarray:
    Q = _discrete_frame(h.shape[0], degree)
    return (Q @ (Q.T @ h.ravel())).reshape(h.shape)


def poly_project(f: GranularFunction, q: DyadicCube, basis: PolyBasis | None = None) -> GranularFunction:
    """Orthogonal projection of f|_q onto polynomials of degree <= D on q, in the
    discrete L^2(q) inner product; zero off q."""
    basis = PolyBasis.build() if basis is None else basis
    if q.lattice != f.lattice:
        raise DomainError("cube and function live on different lattices")
    out = f.lattice.zeros()
    out[q.slices] = _project_block(f.values[q.slices], basis.degree)
    return GranularFunction(out, f.lattice, signed=True)


def bad_part(f: GranularFunction, q: DyadicCube, basis: PolyBasis | None = None) -> GranularFunction:
    """b_q = f chi_q - Pi_q[f chi_q]."""
    basis = PolyBasis.build() if basis is None else basis
    out = f.lattice.zeros()
    h = f.values[q.slices]
    out[q.slices] = h - _project_block(h, basis.degree)
    return GranularFunction(out, f.lattice, signed=True)


def moments(g: GranularFunction, q: DyadicCube, basis: PolyBasis | None = None) -> np.ndarray:
    """Integrals of g against P_j((x - x_q)/l(q)) over q, divided by l(q)^2."""
    basis = PolyBasis.build() if basis is None else basis
    U, V = local_coords(q)
    P = basis.evaluate(U, V)
    return np.tensordot(g.values[q.slices], P, axes=([0, 1], [0, 1])) / q.cells ** 2


def projection_constant(f: GranularFunction, q: DyadicCube, basis: PolyBasis | None = None) -> float:
    """||Pi_q f||_inf / ||f chi_q||_inf (0 when f vanishes on q)."""
    top = float(np.abs(f.values[q.slices]).max())
    if top == 0:
        return 0.0
    return float(np.abs(poly_project(f, q, basis).values).max()) / top
