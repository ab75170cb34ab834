import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lacunary.errors import DomainError
from lacunary.grid import (
    DyadicCube, GranularFunction, GridSet, Lattice, iterated_log, length_of, mass,
    maximal_dyadic_cover, pyramid,
)
from lacunary.io import read_function_csv, read_pgm, write_function_csv, write_pgm


def quadtree_cover(mask, level=0, i=0, j=0):
    """Independent recursive-splitting oracle: (level, i, j) of the maximal cubes."""
    n = mask.shape[0]
    if mask.all():
        return [(level, i, j)]
    if not mask.any() or n == 1:
        return []
    h = n // 2
    out = []
    for a in (0, 1):
        for b in (0, 1):
            out += quadtree_cover(mask[a * h:(a + 1) * h, b * h:(b + 1) * h], level + 1, 2 * i + a, 2 * j + b)
    return out


def masks(n=16):
    return st.lists(st.booleans(), min_size=n * n, max_size=n * n).map(
        lambda b: np.array(b, bool).reshape(n, n))


# ---------------------------------------------------------------------------
# iterated log

def test_iterated_log_examples():
    assert iterated_log(1, 28) == 7.0
    assert iterated_log(1, 0) == pytest.approx(math.log2(100))
    # the inner "100 +" makes Log^2(28) = log2(100 + 100 + 7)
    assert iterated_log(2, 28) == pytest.approx(math.log2(207.0), abs=1e-12)


@pytest.mark.parametrize("n,t", [(0, 1.0), (1, -1.0), (2, math.inf)])
def test_iterated_log_domain(n, t):
    with pytest.raises(DomainError):
        iterated_log(n, t)


@given(st.integers(1, 4), st.floats(0, 1e12), st.floats(0, 1e12))
def test_iterated_log_monotone(n, a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert iterated_log(n, lo) <= iterated_log(n, hi)
    assert iterated_log(n, lo) >= math.log2(100)


# ---------------------------------------------------------------------------
# lattice and cubes

def test_lattice_validation():
    with pytest.raises(DomainError):
        Lattice(12, 1 / 16)
    with pytest.raises(DomainError):
        Lattice(16, 0.1)
    with pytest.raises(DomainError):
        Lattice(16, 1 / 16, (1 / 32, 0.0))


def test_cube_geometry():
    lat = Lattice(16, 1 / 16)
    q = lat.cube(2, 1, 3)
    assert q.cells == 4 and q.side == 0.25
    assert q.corner == (0.25, 0.75)
    assert q.parent() == lat.cube(1, 0, 1)
    assert all(q.contains(c) for c in q.children())
    assert lat.root().contains(q) and not q.contains(lat.root())


def test_window_and_around():
    lat = Lattice(16, 1 / 16)
    q = lat.cube(1, 1, 0)
    w = lat.window(q)
    assert w.n == 8 and w.offset_in(lat) == (8, 0)
    big = lat.around(0.3)
    assert big.contains_lattice(lat)
    i0, j0 = lat.offset_in(big)
    assert i0 * big.delta >= 0.3 and j0 * big.delta >= 0.3


# ---------------------------------------------------------------------------
# mass and functions

def test_mass_examples():
    lat = Lattice(4, 1 / 4)
    assert mass(GranularFunction(np.ones((4, 4)), lat)) == 1.0
    assert mass(GranularFunction.zeros(lat)) == 0.0
    v = np.zeros((8, 8))
    v[3, 5] = 0.5
    assert mass(GranularFunction(v, Lattice(8, 1 / 8))) == 0.0078125


def test_function_validation():
    lat = Lattice(4, 1 / 4)
    with pytest.raises(DomainError):
        GranularFunction(-np.ones((4, 4)), lat)
    with pytest.raises(DomainError):
        GranularFunction(np.full((4, 4), np.nan), lat)
    with pytest.raises(DomainError):
        GranularFunction(np.ones((2, 2)), lat)
    f = GranularFunction(np.ones((4, 4)), lat)
    with pytest.raises(AttributeError):
        f.values = None
    with pytest.raises(ValueError):
        f.values[0, 0] = 3


def test_restrict_embed_roundtrip(rng):
    lat = Lattice(16, 1 / 16)
    f = GranularFunction(rng.random((16, 16)), lat)
    q = lat.cube(2, 3, 1)
    r = f.restrict(q)
    assert np.array_equal(r.values, f.values[q.slices])
    back = r.embed(lat)
    assert np.array_equal(back.values[q.slices], r.values)
    assert back.mass == pytest.approx(r.mass)


@given(masks(), masks())
def test_measure_additivity(a, b):
    lat = Lattice(16, 1 / 16)
    A, B = GridSet(a, lat), GridSet(b, lat)
    assert (A | B).measure + (A & B).measure == A.measure + B.measure
    assert (A - B) <= A and (A & B) <= B
    assert ((A - B) | (A & B)) == A


# ---------------------------------------------------------------------------
# dyadic cover and length

def test_cover_examples():
    lat = Lattice(8, 1 / 8)
    assert [(c.level, c.i, c.j) for c in maximal_dyadic_cover(GridSet.full(lat))] == [(0, 0, 0)]
    assert maximal_dyadic_cover(GridSet.empty(lat)) == []
    three = GridSet.from_cubes([lat.cube(1, 0, 0), lat.cube(1, 0, 1), lat.cube(1, 1, 1)], lat)
    got = sorted((c.level, c.i, c.j) for c in maximal_dyadic_cover(three))
    assert got == [(1, 0, 0), (1, 0, 1), (1, 1, 1)]


def test_length_examples():
    lat = Lattice(8, 1 / 8)
    assert length_of(GridSet.full(lat)) == 1.0
    two = GridSet.from_cubes([lat.cube(1, 0, 0), lat.cube(1, 1, 1)], lat)
    assert length_of(two) == 1.0


def test_length_oracle_17_cells():
    lat = Lattice(64, 2.0 ** -6)
    r = np.random.default_rng(7)
    m = np.zeros(64 * 64, bool)
    m[r.choice(64 * 64, 17, replace=False)] = True
    m = m.reshape(64, 64)
    oracle = sum(lat.n * lat.delta / 2 ** lv for lv, _, _ in quadtree_cover(m))
    assert length_of(GridSet(m, lat)) == oracle


@given(masks())
def test_cover_matches_quadtree(m):
    lat = Lattice(16, 1 / 16)
    cubes = maximal_dyadic_cover(GridSet(m, lat))
    assert sorted((c.level, c.i, c.j) for c in cubes) == sorted(quadtree_cover(m))
    cover = np.zeros(m.shape, int)
    for c in cubes:
        cover[c.slices] += 1
    assert np.array_equal(cover > 0, m) and cover.max(initial=0) <= 1


@given(masks(), masks())
def test_length_subadditive(a, b):
    lat = Lattice(16, 1 / 16)
    b = b & ~a
    A, B = GridSet(a, lat), GridSet(b, lat)
    assert length_of(A | B) <= length_of(A) + length_of(B) + 1e-12


def test_pyramid_shapes():
    p = pyramid(np.ones((8, 8)))
    assert [x.shape[0] for x in p] == [1, 2, 4, 8]
    assert p[0][0, 0] == 64


# ---------------------------------------------------------------------------
# serialisation

def test_pgm_roundtrip(tmp_path, rng):
    lat = Lattice(16, 1 / 16, (0.5, -0.25))
    s = GridSet(rng.random((16, 16)) < 0.3, lat)
    p = write_pgm(s, tmp_path / "s.pgm")
    assert p.read_bytes().startswith(b"P5")
    assert read_pgm(p, lat.delta, lat.origin) == s


def test_function_csv_roundtrip(tmp_path, rng):
    lat = Lattice(8, 1 / 8)
    f = GranularFunction(rng.random((8, 8)) * (rng.random((8, 8)) < 0.5), lat)
    path, _ = write_function_csv(f, tmp_path / "f.csv")
    g = read_function_csv(path)
    assert g.lattice == lat
    assert np.array_equal(g.values, f.values)
