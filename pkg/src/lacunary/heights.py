"""Grain caps, height projections g_k^i, the critical height and the L^1 / L^2 ratios.

For a cell omega and a scale/direction pair (n, phi), the grid rectangle
containing omega has mass W; it is heavy at height 2^i exactly when
W / (c_{n-1} gamma) >= 2^i.  So every (cell, window) pair has a largest height
``floor(log2(W / (c_{n-1} gamma)))`` and the grain cap of omega at height i is
the union of the windows whose height is >= i.  Circle samples with the same
window membership form a *group*; per group and cell the profile H is the
max height over the windows covering the group, and

    g^i = sum over groups G of mu_G * (f [H_G >= i])

with mu_G the circle measure restricted to G (weights 1/P).  Full caps give
sigma_k exactly, so the decomposition telescopes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import DensityPiece
from .exceptional import (
    ExceptionalConfig, Knobs, PieceCells, ScaleLadder, cap_width, cap_window, direction_net,
    height_parameter, ladder_from, logloglog, loglog, rect_keys, rect_masses, regime_partition,
    K2, K3,
)
from .grid import GranularFunction, GridSet, Lattice, iterated_log
from .spherical import (
    DiscreteMeasure, _aggregate, bbox, circle_measure, circle_samples, conv_local, convolve_array,
    minkowski_array, minkowski_local, n_samples, paste, restricted_circle,
)

NO_CAP = -(1 << 40)


def critical_height(k: int, gamma: float, alpha: float, d: int = 2, C_iter: float = 100.0) -> int:
    """m = k(d-1) - log2(gamma/alpha) - ceil(C_iter * logloglog(1/alpha))."""
    if not 0 < alpha < 1 or gamma <= 0:
        raise ValueError("need 0 < alpha < 1 and gamma > 0")
    c = math.ceil(C_iter * logloglog(alpha) - 1e-12)
    return math.floor(k * (d - 1) - math.log2(gamma / alpha) + 1e-9) - c


def top_height(k: int, gamma: float, alpha: float, d: int = 2) -> int:
    """Smallest integer i with 2^i >= the K2 height parameter (heavy tail starts here)."""
    return math.ceil(k * (d - 1) - math.log2(gamma / alpha) + logloglog(alpha) - 1e-9)


def floor_log2(r: np.ndarray) -> np.ndarray:
    """Exact floor(log2 r) for r > 0 (NO_CAP where r == 0): 2^h <= r < 2^{h+1}."""
    out = np.full(r.shape, NO_CAP, dtype=np.int64)
    pos = r > 0
    _, e = np.frexp(r[pos])  # r = m 2^e, 1/2 <= m < 1
    out[pos] = e - 1
    return out


# ---------------------------------------------------------------------------
# height profile

@dataclass
class HeightProfile:
    """Everything needed to evaluate g^i for one (piece, k)."""
    k: int
    gamma: float
    alpha: float
    cells: PieceCells
    ladder: ScaleLadder
    P: int
    groups: list[np.ndarray] = field(repr=False)       # sample indices per group
    H: np.ndarray = field(repr=False)                  # (n_groups, K) heights
    windows: list[tuple[int, float, np.ndarray]] = field(repr=False)  # (n, phi, samples)
    ambient: Lattice = None  # where sigma_k * f and the g^i live
    m: int = 0
    i_top: int = 0

    @property
    def lattice(self):
        return self.cells.lattice

    def shifted_cells(self) -> np.ndarray:
        """Support cell indices in the ambient lattice."""
        return self.cells.ij + np.array(self.lattice.offset_in(self.ambient))

    def group_measure(self, g: int) -> DiscreteMeasure:
        return restricted_circle(self.k, self.lattice.delta, self.groups[g])

    def group_atoms(self, g: int):
        _, offs = circle_samples(2.0 ** self.k, self.lattice.delta)
        idx = self.groups[g]
        return _aggregate(offs[idx], np.full(len(idx), 1.0 / self.P))

    def cell_index(self, i: int, j: int) -> int:
        hit = np.nonzero((self.cells.ij[:, 0] == i) & (self.cells.ij[:, 1] == j))[0]
        if hit.size == 0:
            raise KeyError(f"cell ({i}, {j}) is not in the piece's support")
        return int(hit[0])


def build_profile(piece: DensityPiece | GranularFunction, k: int, alpha: float, gamma: float,
                  l_q: float, knobs: Knobs, d: int = 2, ambient: Lattice | None = None) -> HeightProfile:
    f = piece.f if isinstance(piece, DensityPiece) else piece
    if ambient is None:
        ambient = f.lattice.around(2.0 ** k + 2 * f.delta)
    cells = PieceCells.of(f)
    delta = f.lattice.delta
    cfg = ExceptionalConfig(alpha, gamma, k, l_q, 1.0, d, knobs).check_scale()
    ladder = ladder_from(gamma, cfg.R_star, knobs.C_stop, d)
    P = n_samples(2.0 ** k, delta)
    windows, levels = [], []
    for n in range(1, ladder.N + 1):
        c_hi, c_lo = ladder[n], ladder[n - 1]
        width = cap_width(ladder, n, knobs)
        for phi in direction_net(c_hi, c_lo, d):
            _, masses, inv = rect_masses(cells, phi.angle, c_hi, c_lo)
            levels.append(floor_log2(masses[inv] / (c_lo * gamma)))
            windows.append((n, phi.angle, cap_window(k, delta, phi.angle, width)))
    if windows:
        member = np.zeros((len(windows), P), bool)
        for w, (_, _, idx) in enumerate(windows):
            member[w, idx] = True
        packed = np.packbits(member, axis=0)
        _, gid = np.unique(packed.T, axis=0, return_inverse=True)
        gid = gid.ravel()
        order = np.argsort(gid, kind="stable")
        bounds = np.searchsorted(gid[order], np.arange(gid.max() + 2))
        groups = [order[bounds[g]:bounds[g + 1]] for g in range(len(bounds) - 1)]
        lv = np.stack(levels)
        H = np.full((len(groups), len(cells)), NO_CAP, dtype=np.int64)
        for g, idx in enumerate(groups):
            cover = member[:, idx[0]]
            if cover.any():
                H[g] = lv[cover].max(axis=0)
    else:
        groups = [np.arange(P)]
        H = np.full((1, len(cells)), NO_CAP, dtype=np.int64)
    m = critical_height(k, gamma, alpha, d, knobs.C_iter)
    return HeightProfile(k, gamma, alpha, cells, ladder, P, groups, H, windows,
                         ambient, m, top_height(k, gamma, alpha, d))


def profile_for(piece: DensityPiece, k: int, alpha: float, knobs: Knobs, d: int = 2,
                ambient: Lattice | None = None) -> HeightProfile:
    return build_profile(piece, k, alpha, piece.gamma, piece.q.side, knobs, d, ambient)


# ---------------------------------------------------------------------------
# grain caps and projections

@dataclass(frozen=True)
class GrainCapMeasure:
    cell: tuple[int, int]
    i: int
    samples: np.ndarray = field(repr=False)
    measure: DiscreteMeasure = field(repr=False)
    theta: float


def grain_cap(prof: HeightProfile, cell: tuple[int, int], i: int) -> GrainCapMeasure:
    """The union of the windows whose heavy rectangle (at height 2^i) contains the cell."""
    c = prof.cell_index(*cell)
    sel = [g for g in range(len(prof.groups)) if prof.H[g, c] >= i]
    idx = np.sort(np.concatenate([prof.groups[g] for g in sel])) if sel else np.zeros(0, np.int64)
    mu = restricted_circle(prof.k, prof.lattice.delta, idx)
    return GrainCapMeasure(cell, i, idx, mu, 2 * math.pi * len(idx) / prof.P)


def _apply(prof: HeightProfile, select) -> np.ndarray:
    """sum over groups of mu_G * (f restricted to cells where select(H_G) holds)."""
    lat = prof.lattice
    out = prof.ambient.zeros()
    ij = prof.shifted_cells()
    vals = prof.cells.w / lat.cell_area
    if len(vals) == 0:
        return out
    i0, j0 = ij.min(axis=0)
    shape = tuple(ij.max(axis=0) - (i0, j0) + 1)
    for g in range(len(prof.groups)):
        keep = select(prof.H[g])
        if not keep.any():
            continue
        local = np.zeros(shape)
        local[ij[keep, 0] - i0, ij[keep, 1] - j0] = vals[keep]
        offs, w = prof.group_atoms(g)
        loc, lo = conv_local(local, offs, w)
        paste(out, loc, int(i0 + lo[0]), int(j0 + lo[1]), "add")
    return out


def _support(prof: HeightProfile, select) -> np.ndarray:
    out = prof.ambient.zeros(bool)
    ij = prof.shifted_cells()
    if len(ij) == 0:
        return out
    i0, j0 = ij.min(axis=0)
    shape = tuple(ij.max(axis=0) - (i0, j0) + 1)
    for g in range(len(prof.groups)):
        keep = select(prof.H[g])
        if not keep.any():
            continue
        local = np.zeros(shape, bool)
        local[ij[keep, 0] - i0, ij[keep, 1] - j0] = True
        offs, _ = prof.group_atoms(g)
        loc, lo = minkowski_local(local, offs)
        paste(out, loc, int(i0 + lo[0]), int(j0 + lo[1]), "or")
    return out


def height_projection(prof: HeightProfile, i: int) -> GranularFunction:
    """g_k^i = sum over cells omega of sigma_{k,omega}^i * (f chi_omega)."""
    return GranularFunction(_apply(prof, lambda h: h >= i), prof.ambient)


def sigma_conv(prof: HeightProfile) -> np.ndarray:
    f = prof.ambient.zeros()
    ij = prof.shifted_cells()
    f[ij[:, 0], ij[:, 1]] = prof.cells.w / prof.lattice.cell_area
    return convolve_array(circle_measure(prof.k, prof.lattice.delta), f)


@dataclass
class HeightDecomposition:
    m: int
    i_top: int
    total: np.ndarray = field(repr=False)           # sigma_k * f
    light: np.ndarray = field(repr=False)           # sigma_k * f - g^m
    intermediate: dict[int, np.ndarray] = field(repr=False)  # i -> g^i - g^{i+1}
    tail: np.ndarray = field(repr=False)            # g^{i_top}

    def residual(self) -> float:
        s = self.light + self.tail
        for v in self.intermediate.values():
            s = s + v
        return float(np.abs(s - self.total).max())


def telescope(prof: HeightProfile) -> HeightDecomposition:
    m, top = prof.m, max(prof.i_top, prof.m)
    light = _apply(prof, lambda h: h < m)
    mids = {i: _apply(prof, lambda h, i=i: h == i) for i in range(m, top)}
    tail = _apply(prof, lambda h: h >= top)
    return HeightDecomposition(m, top, sigma_conv(prof), light, mids, tail)


def heavy_tail_support(prof: HeightProfile) -> GridSet:
    top = max(prof.i_top, prof.m)
    return GridSet(_support(prof, lambda h: h >= top), prof.ambient)


# ---------------------------------------------------------------------------
# L^1 and L^2 ratios

def level_masses(prof: HeightProfile, lo: int, hi: int) -> np.ndarray:
    """mass of g^i - g^{i+1} for i in [lo, hi), computed as sum_G |G|/P sum_cells w [H_G == i]."""
    out = np.zeros(max(hi - lo, 0))
    if hi <= lo:
        return out
    frac = np.array([len(g) for g in prof.groups]) / prof.P
    for g in range(len(prof.groups)):
        h = prof.H[g]
        sel = (h >= lo) & (h < hi)
        if sel.any():
            np.add.at(out, h[sel] - lo, frac[g] * prof.cells.w[sel])
    return out


def per_offset_l1(profiles: list[HeightProfile], mass: float) -> list[float]:
    """For each offset j >= 0: sum over k of ||g_k^{m_k+j} - g_k^{m_k+j+1}||_1 / ||f||_1.

    Each difference is a nonnegative function, so its L^1 norm is its mass."""
    if mass == 0 or not profiles:
        return []
    J = max(p.i_top - p.m for p in profiles)
    tot = np.zeros(max(J, 0))
    for p in profiles:
        lm = level_masses(p, p.m, p.i_top)
        tot[:len(lm)] += lm
    return list(tot / mass)


def l1_intermediate(profiles: list[HeightProfile], mass: float, alpha: float) -> float:
    """||sum_k sum_{m<=i<i_top} (g^i - g^{i+1})||_1 / (Log^3(1/alpha) ||f||_1)."""
    if not profiles:
        raise ValueError("empty k range")
    if mass == 0:
        return 0.0
    return sum(per_offset_l1(profiles, mass)) / iterated_log(3, 1.0 / alpha)


def l2_norm2(a: np.ndarray, delta: float) -> float:
    return float(np.sum(a * a)) * delta * delta


def l2_light(prof: HeightProfile, light: np.ndarray | None = None) -> float:
    """||sigma_k * f - g^m||_2^2 loglog(1/alpha)^2 / (alpha ||f||_1)."""
    mass = prof.cells.total
    if mass == 0:
        return 0.0
    light = _apply(prof, lambda h: h < prof.m) if light is None else light
    return l2_norm2(light, prof.lattice.delta) * loglog(prof.alpha) ** 2 / (prof.alpha * mass)


def padded_sigma_conv(f: GranularFunction, k: int) -> np.ndarray:
    """sigma_k * f on a lattice padded by the radius (so nothing is lost)."""
    amb = f.lattice.around(2.0 ** k + 2 * f.delta)
    return convolve_array(circle_measure(k, f.delta), f.embed(amb).values)


def l2_global_scale_bound(f: GranularFunction, k: int, gamma: float, alpha: float, d: int = 2,
                          conv: np.ndarray | None = None) -> float:
    """||sigma_k * f||_2^2 2^{k(d-1)} / (gamma log2(1/alpha) ||f||_1)."""
    mass = f.mass
    if mass == 0:
        return 0.0
    conv = padded_sigma_conv(f, k) if conv is None else conv
    return l2_norm2(conv, f.delta) * 2.0 ** (k * (d - 1)) / (gamma * math.log2(1 / alpha) * mass)


def kernel_form_l2(f: GranularFunction, k: int) -> float:
    """<f, (sigma_k * sigma_k) * f>, the kernel form of ||sigma_k * f||_2^2."""
    mu = circle_measure(k, f.delta)
    offs, w = mu.offsets, mu.weights
    # atoms of sigma_k * sigma_k (reflected measure equals itself by symmetry)
    pair = (offs[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    ww = (w[:, None] * w[None, :]).ravel()
    o2, w2 = _aggregate(pair, ww)
    g = f.embed(f.lattice.around(2.0 ** (k + 1) + 4 * f.delta)).values
    conv = np.zeros(g.shape)
    box = bbox(g != 0)
    if box is None:
        return 0.0
    i0, i1, j0, j1 = box
    loc, lo = conv_local(g[i0:i1, j0:j1], o2, w2, "fft")
    paste(conv, loc, i0 + int(lo[0]), j0 + int(lo[1]), "add")
    return float(np.sum(g * conv)) * f.delta ** 2


def k3_tail_ratio(f: GranularFunction, ks, gamma: float, alpha: float, l_q: float,
                  knobs: Knobs, d: int = 2) -> float | None:
    """sum over K3 scales of ||sigma_k * f||_2^2 / (alpha log2(1/alpha)^{1 - C_K2} ||f||_1)."""
    mass = f.mass
    if mass == 0:
        return None
    tot, any_k = 0.0, False
    for k in ks:
        cfg = ExceptionalConfig(alpha, gamma, k, l_q, 1.0, d, knobs)
        if regime_partition(k, cfg) == K3:
            any_k = True
            tot += l2_norm2(padded_sigma_conv(f, k), f.delta)
    if not any_k:
        return None
    return tot / (alpha * math.log2(1 / alpha) ** (1 - knobs.C_K2) * mass)


def support_size_ratio(piece: DensityPiece, k: int, conv: np.ndarray | None = None) -> float | None:
    """|supp(sigma_k * f)| / (2^{k(d-1)} lambda)."""
    if piece.length == 0:
        return None
    if conv is None:
        _, offs = circle_samples(2.0 ** k, piece.f.delta)
        g = piece.f.embed(piece.f.lattice.around(2.0 ** k + 2 * piece.f.delta))
        supp = minkowski_array(g.values != 0, np.unique(offs, axis=0))
    else:
        supp = conv > 0
    return float(supp.sum()) * piece.f.lattice.cell_area / (2.0 ** k * piece.length)


def mass_certificate(prof: HeightProfile, max_cells: int = 64) -> float:
    """Diagnostic: max over sampled cells omega, scales n and directions of the mass
    of f in omega + (R_0 restricted to |x| < c_n / 10), divided by c_{n-1} gamma 2^m,
    where R_0 is the origin-centred c_n x c_{n-1} rectangle."""
    cells = prof.cells
    K = len(cells)
    if K == 0:
        return 0.0
    pick = np.unique(np.linspace(0, K - 1, min(K, max_cells)).astype(int))
    best = 0.0
    seen = set()
    for n, phi, _ in prof.windows:
        if (n, phi) in seen:
            continue
        seen.add((n, phi))
        c_hi, c_lo = prof.ladder[n], prof.ladder[n - 1]
        ct, st = math.cos(phi), math.sin(phi)
        for c in pick:
            dx = cells.x - cells.x[c]
            dy = cells.y - cells.y[c]
            u = -dx * st + dy * ct
            v = dx * ct + dy * st
            sel = (np.abs(u) <= c_hi / 2) & (np.abs(v) <= c_lo / 2) & (np.hypot(dx, dy) < c_hi / 10)
            best = max(best, float(cells.w[sel].sum()) / (c_lo * prof.gamma * 2.0 ** prof.m))
    return best


def k2_scales(piece: DensityPiece, ks, alpha: float, knobs: Knobs, d: int = 2) -> list[int]:
    out = []
    for k in ks:
        cfg = ExceptionalConfig(alpha, piece.gamma, k, piece.q.side, 1.0, d, knobs)
        if regime_partition(k, cfg) == K2:
            out.append(k)
    return out


__all__ = [
    "critical_height", "top_height", "HeightProfile", "build_profile", "profile_for",
    "GrainCapMeasure", "grain_cap", "height_projection", "HeightDecomposition", "telescope",
    "heavy_tail_support", "level_masses", "per_offset_l1", "l1_intermediate", "l2_light",
    "l2_global_scale_bound", "kernel_form_l2", "k3_tail_ratio", "support_size_ratio",
    "mass_certificate", "k2_scales", "height_parameter", "rect_keys",
]
