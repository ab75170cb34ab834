import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lacunary.cz import (
    PolyBasis, bad_part, gap_distance, local_coords, moments, poly_project, projection_constant,
    whitney, whitney_to_csv,
)
from lacunary.errors import DomainError
from lacunary.grid import GranularFunction, GridSet, Lattice


def brute_gap(a0, a1, b0, b1, comp, delta):
    """min distance from the cube [a0, a1) x [b0, b1) (cell indices) to complement cells."""
    ci, cj = np.nonzero(comp)
    gx = np.maximum(0, np.maximum(a0 - (ci + 1), ci - a1))
    gy = np.maximum(0, np.maximum(b0 - (cj + 1), cj - b1))
    return float(np.hypot(gx, gy).min()) * delta


def whitney_oracle(mask, delta):
    """Recursive subdivision: keep a cube inside Omega once diam <= dist, or at one cell."""
    comp = ~mask
    out = []

    def rec(level, i, j, size):
        a0, b0 = i * size, j * size
        block = mask[a0:a0 + size, b0:b0 + size]
        if not block.any():
            return
        if block.all():
            dist = brute_gap(a0, a0 + size, b0, b0 + size, comp, delta)
            if size == 1 or dist >= size * delta * math.sqrt(2) * (1 - 1e-12):
                out.append((level, i, j, dist))
                return
        for a in (0, 1):
            for b in (0, 1):
                rec(level + 1, 2 * i + a, 2 * j + b, size // 2)

    rec(0, 0, 0, mask.shape[0])
    return sorted(out)


def test_whitney_examples():
    lat = Lattice(16, 1 / 16)
    assert whitney(GridSet.empty(lat)) == []
    m = lat.zeros(bool)
    m[5, 9] = True
    (wc,) = whitney(GridSet(m, lat))
    assert (wc.cube.level, wc.cube.i, wc.cube.j) == (4, 5, 9) and wc.floor
    with pytest.raises(DomainError):
        whitney(GridSet.full(lat))


def test_whitney_unit_square_in_padded_domain():
    # [0, 1)^2 inside a domain [-1, 3)^2 (power-of-two side)
    lat = Lattice(32, 1 / 8, (-1.0, -1.0))
    m = lat.zeros(bool)
    m[8:16, 8:16] = True
    got = sorted((c.cube.level, c.cube.i, c.cube.j, c.dist) for c in whitney(GridSet(m, lat)))
    want = whitney_oracle(m, lat.delta)
    assert [g[:3] for g in got] == [w[:3] for w in want]
    assert all(g[3] == pytest.approx(w[3]) for g, w in zip(got, want))


def random_omega(seed, n=32):
    r = np.random.default_rng(seed)
    m = np.zeros((n, n), bool)
    for _ in range(r.integers(1, 5)):
        a, b = r.integers(2, n - 10, size=2)
        h, w = r.integers(2, 9, size=2)
        m[a:a + h, b:b + w] = True
    return m


@pytest.mark.parametrize("seed", range(6))
def test_whitney_matches_oracle(seed):
    lat = Lattice(32, 1 / 32)
    m = random_omega(seed)
    got = sorted((c.cube.level, c.cube.i, c.cube.j) for c in whitney(GridSet(m, lat)))
    assert got == [w[:3] for w in whitney_oracle(m, lat.delta)]


@given(st.integers(0, 10 ** 6))
def test_whitney_invariants(seed):
    lat = Lattice(32, 1 / 32)
    m = random_omega(seed)
    cubes = whitney(GridSet(m, lat))
    cover = np.zeros(m.shape, int)
    for wc in cubes:
        cover[wc.cube.slices] += 1
        assert wc.dist <= 4 * wc.diam * (1 + 1e-12)
        if not wc.floor:
            assert wc.dist >= wc.diam * (1 - 1e-12)
    assert np.array_equal(cover > 0, m) and cover.max() <= 1


def test_gap_distance_zero_next_to_complement():
    lat = Lattice(8, 1 / 8)
    m = np.ones((8, 8), bool)
    m[0, 0] = False
    d = gap_distance(GridSet(m, lat))
    assert d[0, 1] == 0 and d[1, 1] == 0 and d[2, 2] == pytest.approx(math.sqrt(2) / 8)


def test_whitney_csv(tmp_path):
    lat = Lattice(16, 1 / 16)
    m = lat.zeros(bool)
    m[4:8, 4:8] = True
    p = whitney_to_csv(whitney(GridSet(m, lat)), tmp_path / "w.csv")
    assert p.read_text().splitlines()[0] == "level,i,j,dist"


# ---------------------------------------------------------------------------
# polynomial projection

@pytest.mark.parametrize("D", [0, 1, 2, 3])
def test_basis_orthonormal(D):
    B = PolyBasis.build(D)
    assert len(B) == (D + 1) * (D + 2) // 2
    assert np.abs(B.gram() - np.eye(len(B))).max() <= 1e-10


LAT = Lattice(64, 1 / 64)


def cube_fn(rng, q, fill=None):
    v = LAT.zeros()
    v[q.slices] = rng.random((q.cells, q.cells)) if fill is None else fill
    return GranularFunction(v, LAT)


def test_projection_examples():
    q = LAT.cube(2, 1, 2)
    c = cube_fn(None, q, 0.37)
    assert np.abs(poly_project(c, q).values - c.values).max() <= 1e-12
    X, _ = LAT.centers()
    lin = LAT.zeros()
    lin[q.slices] = X[q.slices]
    L = GranularFunction(lin, LAT)
    assert np.abs(poly_project(L, q).values - lin).max() <= 1e-9
    assert np.abs(bad_part(c, q).values).max() <= 1e-12


def test_bad_part_half_cube_degree0():
    q = LAT.cube(2, 0, 0)
    v = LAT.zeros()
    v[0:8, 0:16] = 1.0
    b = bad_part(GranularFunction(v, LAT), q, PolyBasis.build(0))
    want = np.zeros((16, 16))
    want[:8] = 0.5
    want[8:] = -0.5
    assert np.abs(b.values[q.slices] - want).max() <= 1e-12
    assert abs(b.values.sum()) <= 1e-12


@given(st.integers(0, 10 ** 6), st.integers(1, 4))
def test_projection_properties(seed, level):
    rng = np.random.default_rng(seed)
    m = 1 << level
    q = LAT.cube(level, int(rng.integers(m)), int(rng.integers(m)))
    f = cube_fn(rng, q)
    P = poly_project(f, q)
    off = np.ones(LAT.zeros().shape, bool)
    off[q.slices] = False
    assert not P.values[off].any()
    assert np.abs(poly_project(P, q).values - P.values).max() <= 1e-9
    # quadratic reproduction
    U, V = local_coords(q)
    poly = LAT.zeros()
    poly[q.slices] = 1 + 2 * U - 3 * V * U + 0.5 * V ** 2
    Pp = poly_project(GranularFunction(poly, LAT, signed=True), q)
    assert np.abs(Pp.values - poly).max() <= 1e-9
    b = bad_part(f, q)
    assert np.abs(moments(b, q)).max() <= 1e-9
    assert np.sum(P.values ** 2) <= np.sum(f.values ** 2) * (1 + 1e-9)
    g = cube_fn(rng, q)
    inner = np.sum(b.values * poly_project(g, q).values)
    assert abs(inner) <= 1e-8 * max(1.0, np.sum(np.abs(b.values)))
    assert b.mass <= (1 + projection_constant(f, q)) * f.mass * (1 + 1e-9) + 1e-12


def test_projection_rejects_foreign_cube():
    q = Lattice(32, 1 / 32).cube(1, 0, 0)
    with pytest.raises(DomainError):
        poly_project(GranularFunction.zeros(LAT), q)
