import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lacunary.exceptional import (
    ExceptionalConfig, Knobs, cap_width, cap_window, direction_net, exceptional_set,
    height_parameter, rect_keys,
)
from lacunary.grid import GranularFunction, Lattice
from lacunary.heights import (
    NO_CAP, build_profile, critical_height, grain_cap, heavy_tail_support, height_projection,
    kernel_form_l2, l1_intermediate, l2_global_scale_bound, l2_light, l2_norm2, padded_sigma_conv,
    per_offset_l1, profile_for, sigma_conv, support_size_ratio, telescope, top_height,
)
from lacunary.spherical import circle_samples

from _pieces import ALPHA, KNOBS, WIDE, sparse_pieces


def test_critical_height_examples():
    assert critical_height(20, 2.0 ** -10, 2.0 ** -10, 2, 100) == -154
    assert critical_height(20, 2.0 ** -10, 2.0 ** -10, 2, 1) == 18
    with pytest.raises(ValueError):
        critical_height(0, 1.0, 1.0)


@given(st.integers(-20, 40), st.integers(-30, 0), st.integers(-40, -1), st.integers(1, 100))
def test_critical_height_monotone(k, eg, ea, c):
    g, a = 2.0 ** eg, 2.0 ** ea
    assert critical_height(k + 1, g, a, 2, c) == critical_height(k, g, a, 2, c) + 1
    assert top_height(k + 1, g, a) == top_height(k, g, a) + 1
    assert critical_height(k, g, a, 2, c) <= top_height(k, g, a)
    assert 2.0 ** top_height(k, g, a) >= height_parameter(k, g, a) * (1 - 1e-12) / 1


PIECES = {seed: sparse_pieces(seed) for seed in range(2)}


def profile(seed, idx=0, k=-1, knobs=WIDE):
    p = PIECES[seed][idx]
    return p, profile_for(p, k, ALPHA, knobs)


def finite_heights(prof):
    h = prof.H[prof.H > NO_CAP]
    return int(h.min()), int(h.max())


# ---------------------------------------------------------------------------
# grain caps

def oracle_cap(prof, c, i):
    """Exhaustive scan: for every scale and direction find the grid rectangle holding
    the cell, integrate the piece over it, and keep the cap if it is heavy at 2^i."""
    cells = prof.cells
    keep = []
    for n in range(1, prof.ladder.N + 1):
        c_hi, c_lo = prof.ladder[n], prof.ladder[n - 1]
        for phi in direction_net(c_hi, c_lo):
            a, b = rect_keys(cells.x, cells.y, phi.angle, c_hi, c_lo)
            same = (a == a[c]) & (b == b[c])
            if cells.w[same].sum() / (c_lo * prof.gamma) >= 2.0 ** i:
                keep.append(cap_window(prof.k, prof.lattice.delta, phi.angle,
                                       cap_width(prof.ladder, n, WIDE)))
    return np.unique(np.concatenate(keep)) if keep else np.zeros(0, np.int64)


@pytest.mark.parametrize("seed", range(2))
def test_grain_cap_matches_exhaustive_scan(seed):
    p, prof = profile(seed)
    lo, hi = finite_heights(prof)
    rng = np.random.default_rng(seed)
    for c in rng.choice(len(prof.cells), 6, replace=False):
        cell = tuple(int(t) for t in prof.cells.ij[c])
        for i in range(lo - 1, hi + 2):
            gc = grain_cap(prof, cell, i)
            assert np.array_equal(gc.samples, oracle_cap(prof, c, i))


def test_grain_cap_extremes_and_antimonotone():
    p, prof = profile(0)
    lo, hi = finite_heights(prof)
    cell = tuple(int(t) for t in prof.cells.ij[0])
    empty = grain_cap(prof, cell, hi + 1)
    assert empty.samples.size == 0 and empty.theta == 0
    full = grain_cap(prof, cell, lo)
    assert full.samples.size == prof.P and full.theta == pytest.approx(2 * math.pi)
    assert full.measure.weights.sum() == pytest.approx(1.0)
    prev = set(full.samples.tolist())
    for i in range(lo, hi + 2):
        cur = set(grain_cap(prof, cell, i).samples.tolist())
        assert cur <= prev
        prev = cur


# ---------------------------------------------------------------------------
# height projections and the telescope

def test_height_projection_matches_per_grain_oracle():
    p, prof = profile(1)
    lo, hi = finite_heights(prof)
    amb = prof.ambient
    _, offs = circle_samples(2.0 ** prof.k, prof.lattice.delta)
    shift = np.array(prof.lattice.offset_in(amb))
    vals = prof.cells.w / prof.lattice.cell_area
    for i in (lo, (lo + hi) // 2, hi):
        want = amb.zeros()
        for c, ij in enumerate(prof.cells.ij):
            s = grain_cap(prof, tuple(int(t) for t in ij), i).samples
            pts = ij + shift + offs[s]
            np.add.at(want, (pts[:, 0], pts[:, 1]), vals[c] / prof.P)
        got = height_projection(prof, i).values
        assert np.abs(got - want).max() <= 1e-12


@pytest.mark.parametrize("seed", range(2))
def test_projection_bounds_and_endpoints(seed):
    p, prof = profile(seed)
    lo, hi = finite_heights(prof)
    total = sigma_conv(prof)
    for i in range(lo, hi + 2):
        g = height_projection(prof, i).values
        assert g.min() >= -1e-12 and np.all(g <= total + 1e-10)
    assert np.abs(height_projection(prof, lo).values - total).max() <= 1e-8
    assert not height_projection(prof, hi + 1).values.any()


@pytest.mark.parametrize("seed", range(2))
def test_telescope_identity_and_tail_containment(seed):
    # a smaller alpha lowers i_top so that the heavy tail is not empty
    alpha = 2.0 ** -6
    p = PIECES[seed][0]
    prof = profile_for(p, -1, alpha, WIDE)
    dec = telescope(prof)
    assert dec.residual() <= 1e-10
    cfg = ExceptionalConfig(alpha, p.gamma, prof.k, p.q.side,
                            height_parameter(prof.k, p.gamma, alpha), 2, WIDE)
    S = exceptional_set(p, cfg, ambient=prof.ambient).S
    tail = heavy_tail_support(prof)
    assert (dec.tail > 0).any()
    assert not np.any(tail.mask & ~S.mask)
    assert not np.any((dec.tail > 0) & ~tail.mask)


def test_telescope_without_rectangles_is_all_light():
    lat = Lattice(64, 1 / 64)
    v = lat.zeros()
    v[20, 37] = 1.0
    prof = build_profile(GranularFunction(v, lat), 0, ALPHA, 2.0 ** -6, 1.0, KNOBS)
    assert prof.ladder.N == 0
    dec = telescope(prof)
    assert np.abs(dec.light - dec.total).max() <= 1e-12
    assert not dec.tail.any() and all(not v.any() for v in dec.intermediate.values())


# ---------------------------------------------------------------------------
# L^1 and L^2

def test_per_offset_l1_matches_direct_norms():
    p, prof = profile(0)
    offs = per_offset_l1([prof], p.mass)
    assert len(offs) == prof.i_top - prof.m
    d2 = prof.lattice.cell_area
    for j, v in enumerate(offs):
        i = prof.m + j
        diff = height_projection(prof, i).values - height_projection(prof, i + 1).values
        assert v == pytest.approx(diff.sum() * d2 / p.mass, rel=1e-9, abs=1e-15)
        assert v <= 2  # pinned C_L1
    assert l1_intermediate([prof], p.mass, ALPHA) >= 0
    with pytest.raises(ValueError):
        l1_intermediate([], p.mass, ALPHA)


def test_l2_light_zero_cases():
    lat = Lattice(64, 1 / 64)
    z = GranularFunction.zeros(lat)
    prof = build_profile(z, 0, ALPHA, 2.0 ** -6, 1.0, WIDE)
    assert l2_light(prof) == 0 and l2_global_scale_bound(z, 0, 2.0 ** -6, ALPHA) == 0
    p, prof = profile(0)
    lo, _ = finite_heights(prof)
    prof.m = lo  # every cell heavy: nothing is light
    assert l2_light(prof) == 0


def test_l2_light_refinement():
    coarse = {p.j: p for p in sparse_pieces(0)}
    fine = {p.j: p for p in sparse_pieces(0, refine=2)}
    for j, p in coarse.items():
        a = l2_light(profile_for(p, -1, ALPHA, WIDE))
        b = l2_light(profile_for(fine[j], -1, ALPHA, WIDE))
        assert a <= 1728 and b <= 1728
        if a > 0:
            assert 0.5 <= b / a <= 2


def test_kernel_form_matches_l2():
    lat = Lattice(64, 1 / 64)
    v = lat.zeros()
    v[16:32, 16:32] = 1.0
    f = GranularFunction(v, lat)
    for k in (-3, -2):
        direct = l2_norm2(padded_sigma_conv(f, k), f.delta)
        assert kernel_form_l2(f, k) == pytest.approx(direct, rel=1e-6)


@settings(max_examples=10)
@given(st.integers(0, 10 ** 6))
def test_kernel_form_random(seed):
    lat = Lattice(32, 1 / 32)
    r = np.random.default_rng(seed)
    f = GranularFunction((r.random((32, 32)) < 0.1) * r.random((32, 32)), lat)
    assert kernel_form_l2(f, -2) == pytest.approx(l2_norm2(padded_sigma_conv(f, -2), f.delta),
                                                  rel=1e-6, abs=1e-15)


@pytest.mark.parametrize("seed", range(2))
def test_support_size_ratio(seed):
    for p in PIECES[seed]:
        r = support_size_ratio(p, -1)
        conv = padded_sigma_conv(p.f, -1)
        assert r == pytest.approx(support_size_ratio(p, -1, conv))
        assert 0 < r <= 64


@pytest.mark.parametrize("seed", range(2))
def test_telescope_identity_all_pieces(seed):
    for p in PIECES[seed]:
        for knobs in (KNOBS, WIDE):
            assert telescope(profile_for(p, -1, ALPHA, knobs)).residual() <= 1e-10
