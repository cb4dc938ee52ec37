from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfwave.catalog import bilinear_hilbert
from tfwave.errors import DegenerateProjection, NotSparse
from tfwave.geometry import (
    Box,
    DyadicCube,
    ShiftedDyadicCube,
    SubspaceDistance,
    Tile,
    VectorTile,
    centralize,
    distance,
    distance_to_subspace,
    is_central_grid,
    is_grid,
    is_sparse,
    lowest_common_ancestor,
    shifted_cover,
    sparsify,
    split_into_grids,
    whitney_decompose,
)

fractions = st.fractions(min_value=-50, max_value=50, max_denominator=64)
sides = st.fractions(min_value=F(1, 64), max_value=16, max_denominator=64)


def shifted_cubes(d=1, levels=(-3, 3)):
    return st.builds(
        ShiftedDyadicCube,
        st.integers(*levels),
        st.tuples(*[st.integers(-20, 20)] * d),
        st.tuples(*[st.integers(0, 2)] * d),
    )


# -- cubes and boxes ---------------------------------------------------------


def test_dyadic_cube_arithmetic():
    q = DyadicCube(-1, (3, -2))
    assert q.box() == Box((F(3, 2), -1), (2, F(-1, 2)))
    assert q.parent() == DyadicCube(0, (1, -1))
    assert all(q.contains(c) for c in q.children())
    assert len(q.children()) == 4
    assert not q.contains(q.parent())


def test_shifted_cube_endpoints_are_exact_thirds():
    x = ShiftedDyadicCube(-1, (2,), (1,))
    assert x.lo == (F(7, 6),)
    assert x.box().hi == (F(5, 3),)
    assert x.to_json() == {"level": -1, "corner": [2], "shift": ["1/3"]}
    assert ShiftedDyadicCube.from_json(x.to_json()) == x
    with pytest.raises(ValueError):
        ShiftedDyadicCube(0, (0,), (3,))


def test_tile_needs_unit_area():
    Tile(DyadicCube(2, (0,)), ShiftedDyadicCube(-2, (5,)))
    with pytest.raises(ValueError):
        Tile(DyadicCube(1, (0,)), ShiftedDyadicCube(0, (0,)))
    with pytest.raises(ValueError):
        VectorTile(DyadicCube(0, (0,)), (ShiftedDyadicCube(0, (0,)), ShiftedDyadicCube(1, (0,))))


@given(st.integers(-4, 4), st.tuples(st.integers(-40, 40)), st.integers(-4, 4), st.tuples(st.integers(-40, 40)))
def test_lowest_common_ancestor_contains_both(la, ca, lb, cb):
    a, b = DyadicCube(la, ca), DyadicCube(lb, cb)
    top = lowest_common_ancestor(a, b)
    if top is None:
        assert (ca[0] < 0) != (cb[0] < 0)
        return
    assert top.contains(a) and top.contains(b)
    assert not any(c.contains(a) and c.contains(b) for c in top.children())


# -- distances ---------------------------------------------------------------


def test_distance_examples():
    a = DyadicCube(0, (0, 0)).box()
    assert distance(a, a) == 0
    assert distance(a, DyadicCube(0, (3, 0)).box()) == 2


def test_distance_to_diagonal_matches_brute_sampling():
    q = Box((2, 0), (3, 1))
    lo, hi = distance_to_subspace(q, [(1, 1)])
    # sup-norm distance from a point to the diagonal is |x - y| / 2
    xs = np.linspace(2, 3, 201)
    ys = np.linspace(0, 1, 201)
    brute = min(abs(x - y) / 2 for x in xs for y in ys)
    assert lo <= brute + 1e-12 and brute <= hi + 1e-12
    assert lo == pytest.approx(0.5)


@given(st.lists(st.tuples(fractions, fractions), min_size=1, max_size=5))
def test_subspace_distance_of_a_point_matches_lp(points):
    # the vertex formula against an independent scipy LP: min t, |x - B a| <= t
    from scipy.optimize import linprog

    basis = [(1, 2, -1)]
    sd = SubspaceDistance(basis, dim=3)
    B = np.array(basis, dtype=float).T
    for p in points:
        x = np.array([float(p[0]), float(p[1]), 0.0])
        A = np.vstack([np.hstack([B, -np.ones((3, 1))]), np.hstack([-B, -np.ones((3, 1))])])
        b = np.concatenate([x, -x])
        res = linprog([0, 1], A_ub=A, b_ub=b, bounds=[(None, None), (0, None)])
        assert float(sd.point((p[0], p[1], 0))) == pytest.approx(res.fun, abs=1e-9)


# -- shifted covers ----------------------------------------------------------


def test_shifted_cover_examples():
    assert shifted_cover(Box((F(1, 10),), (F(45, 100),))).box() == Box((0,), (1,))
    assert shifted_cover(Box((F(4, 10),), (F(72, 100),))).box() == Box((F(1, 3),), (F(4, 3),))


@given(st.lists(fractions, min_size=1, max_size=3), sides)
def test_shifted_cover_contains_with_bounded_ratio(corner, side):
    q = Box(tuple(corner), tuple(c + side for c in corner))
    xi = shifted_cover(q)
    assert xi.box().contains(q)
    assert 1 <= xi.side / side <= 8


@given(st.lists(fractions, min_size=1, max_size=2), sides, st.integers(-3, 3))
def test_shifted_cover_commutes_with_even_rescaling(corner, side, k):
    q = Box(tuple(corner), tuple(c + side for c in corner))
    a = shifted_cover(q)
    scale = F(4) ** k
    b = shifted_cover(Box(tuple(c * scale for c in q.lo), tuple(c * scale for c in q.hi)))
    assert b.level == a.level + 2 * k
    assert b.corner == a.corner and b.shift == a.shift


# -- grids -------------------------------------------------------------------


def test_is_grid_examples():
    assert is_grid([Box((0,), (1,)), Box((0,), (F(1, 2),))])
    assert not is_grid([Box((0,), (1,)), Box((F(1, 2),), (F(3, 2),))])


def test_split_matches_the_three_one_dimensional_families():
    cubes = [ShiftedDyadicCube(l, (z,), (a,)) for l in range(-2, 3) for z in range(-2, 3) for a in range(3)]
    groups = split_into_grids(cubes)
    assert len(groups) == 3

    def family(x):
        if x.shift[0] == 0:
            return 0
        odd = x.level % 2 == 1
        return 1 if (odd and x.shift[0] == 1) or (not odd and x.shift[0] == 2) else 2

    for g in groups:
        assert len({family(x) for x in g}) == 1
        assert is_grid(g)
    assert split_into_grids([]) == []


@settings(max_examples=60)
@given(st.lists(shifted_cubes(d=2), min_size=1, max_size=50))
def test_split_groups_are_grids(cubes):
    groups = split_into_grids(cubes)
    assert len(groups) <= 9
    assert sum(len(g) for g in groups) == len(set(cubes))
    for g in groups:
        assert is_grid(g)


def test_is_sparse_examples():
    a = Box((0,), (1,))
    assert is_sparse([a], 100)
    assert not is_sparse([a, Box((51,), (52,))], 100)
    assert is_sparse([a, Box((102,), (103,))], 100)


def test_centralize_examples():
    a = Box((0,), (1,))
    assert centralize([a], 10**6) == {a: a}
    b = Box((10**8,), (10**8 + 1,))
    assert centralize([a, b], 10**6) == {a: a, b: b}
    with pytest.raises(NotSparse):
        centralize([a, Box((2,), (3,))], 10**6)


def test_centralize_three_scales():
    L = 10**6
    big = Box((0,), (10**14,))
    mid = Box((3 * 10**13,), (3 * 10**13 + 10**7,))
    small = Box((3 * 10**13 + 2 * 10**7,), (3 * 10**13 + 2 * 10**7 + 1,))
    G = centralize([big, mid, small], L)
    for A, GA in G.items():
        assert GA.contains(A) and A.dilate(2).contains(GA)
    assert is_central_grid(list(G.values()), 1000)


@settings(max_examples=40)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(-50, 50)), min_size=1, max_size=6, unique=True))
def test_centralize_property(specs):
    # scales 1, 2^25, 2^50 with corners spread far apart make any subset 10^6-sparse
    boxes = []
    for k, z in specs:
        s = F(2) ** (25 * k)
        boxes.append(Box((z * s * 10**7,), (z * s * 10**7 + s,)))
    if not is_sparse(boxes, 10**6):
        return
    G = centralize(boxes, 10**6)
    for A, GA in G.items():
        assert GA.contains(A) and A.dilate(2).contains(GA)
    assert is_central_grid(list(G.values()), 1000)


# -- sparsify ----------------------------------------------------------------


def test_sparsify_keeps_sparse_input_whole():
    f = (ShiftedDyadicCube(0, (0,)), ShiftedDyadicCube(0, (5,)))
    tiles = [VectorTile(DyadicCube(0, (k,)), f) for k in range(4)]
    assert sparsify(tiles, 2**21) == [sorted(tiles)]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_sparsify_random_input(seed):
    rng = np.random.default_rng(seed)
    tiles = set()
    while len(tiles) < 200:
        lv = int(rng.integers(-1, 2))
        xis = tuple(ShiftedDyadicCube(lv, (int(rng.integers(-30, 30)),), (int(rng.integers(0, 3)),)) for _ in range(3))
        tiles.add(VectorTile(DyadicCube(-lv, (int(rng.integers(0, 4)),)), xis))
    groups = sparsify(tiles, 64)
    assert sum(len(g) for g in groups) == len(tiles)
    for g in groups:
        freqs = {t.Xis for t in g}
        for j in range(3):
            fam = [f[j] for f in freqs]
            assert is_sparse(fam, 64) and is_grid(fam)
        # a frequency vector never straddles groups
        assert all(t in g for t in tiles if t.Xis in freqs)


# -- Whitney -----------------------------------------------------------------


def _whitney_checks(res, sd, window, C1):
    cubes = res.cubes
    top = max(q.level for q in cubes)
    # dyadic cubes are disjoint exactly when none is an ancestor of another
    present = set(cubes)
    assert len(present) == len(cubes)
    for q in cubes:
        assert all(q.ancestor(k) not in present for k in range(q.level + 1, top + 1))
    for q in cubes:
        assert window.contains(q.box())
        assert sd.cube(q) >= C1 * q.side
    for q in cubes:
        if q.level < top:
            assert sd.cube(q) < (2 * C1 + 2) * q.side


def test_whitney_bht_two_sided_bound():
    gamma = bilinear_hilbert()
    basis = gamma.projection_basis([1, 2])
    window = Box((0, 0), (32, 32))
    res = whitney_decompose(basis, window, (-2, 3), 8)
    assert len(res) > 0
    sd = SubspaceDistance(basis, dim=2)
    _whitney_checks(res, sd, window, 8)
    # covered volume plus the dropped sliver near the line equals the window
    covered = sum(q.volume for q in res.cubes)
    assert covered + res.dropped_volume == window.volume


def test_whitney_zero_subspace_punctured_box():
    window = Box((-1, -1), (1, 1))
    res = whitney_decompose([], window, (-6, 0), 4)
    sd = SubspaceDistance([], dim=2)
    _whitney_checks(res, sd, window, 4)
    assert res.dropped_volume > 0


def test_whitney_far_window_is_single_level():
    basis = bilinear_hilbert().projection_basis([1, 2])
    window = Box((1000, 0), (1004, 4))
    res = whitney_decompose(basis, window, (-2, 0), 8)
    assert {q.level for q in res.cubes} == {0}
    assert len(res) == 16


def test_whitney_rejects_full_subspace():
    with pytest.raises(DegenerateProjection):
        whitney_decompose([(1, 0), (0, 1)], Box((0, 0), (1, 1)), (0, 0), 8)
