from fractions import Fraction as F
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tfwave.errors import GridMismatch
from tfwave.geometry import Box, DyadicCube
from tfwave.gridfn import (
    DyadicCoefficients,
    GridFunction,
    interpolation_check,
    john_nirenberg_ratio,
    lp_norm,
    maximal_function,
    random_dyadic_family,
    seq_bmo,
    seq_lp,
    seq_weak,
    square_function,
    weak_lp_norm,
)

UNIT = Box((0,), (1,))
finite = st.floats(-100, 100, allow_nan=False)
values_1d = arrays(np.float64, st.sampled_from([4, 8, 16]), elements=finite)


def naive_lp(vals, cell, p):
    total = 0.0
    for v in reversed(list(np.ravel(vals))):
        total += abs(v) ** p * cell
    return total ** (1 / p)


def naive_weak(vals, cell, p):
    a = np.abs(np.ravel(vals))
    best = 0.0
    for t in set(a.tolist()):
        if t > 0:
            # |{|f| >= t}| realizes the sup approached from below
            best = max(best, t * (np.count_nonzero(a >= t) * cell) ** (1 / p))
    return best


def test_lp_norm_examples():
    dom = Box((0,), (4,))
    half = GridFunction.indicator(dom, 16, Box((0,), (2,)))
    assert lp_norm(half, 1) == pytest.approx(2.0)
    c = GridFunction(dom, 8, np.full(8, 3.0))
    assert lp_norm(c, 3) == pytest.approx(3 * 4 ** (1 / 3))
    assert lp_norm(c, np.inf) == 3.0
    with pytest.raises(ValueError):
        lp_norm(c, 0)


@given(values_1d, st.floats(0.3, 6))
def test_lp_norm_matches_naive_sum(v, p):
    f = GridFunction(UNIT, len(v), v)
    assert lp_norm(f, p) == pytest.approx(naive_lp(v, 1 / len(v), p), rel=1e-12, abs=1e-300)


@given(values_1d, st.floats(0.3, 6))
def test_weak_norm_matches_threshold_sweep_and_chebyshev(v, p):
    f = GridFunction(UNIT, len(v), v)
    w = weak_lp_norm(f, p)
    assert w == pytest.approx(naive_weak(v, 1 / len(v), p), rel=1e-12)
    assert w <= lp_norm(f, p) * (1 + 1e-12)


def test_weak_norm_two_level_sets():
    v = np.array([4.0, 1, 1, 1, 1, 1, 1, 1])
    f = GridFunction(UNIT, 8, v)
    assert weak_lp_norm(f, 1) == pytest.approx(max(4 * 1 / 8, 1 * 1.0))
    assert weak_lp_norm(f, 0.5) == pytest.approx(max(4 * (1 / 8) ** 2, 1.0))
    e = GridFunction.indicator(UNIT, 8, Box((0,), (F(3, 8),)))
    assert weak_lp_norm(e, 2) == pytest.approx((3 / 8) ** 0.5)


@given(values_1d, st.floats(0.5, 4))
def test_refinement_invariance(v, p):
    f = GridFunction(UNIT, len(v), v)
    g = GridFunction(UNIT, 2 * len(v), np.repeat(v, 2))
    assert lp_norm(g, p) == pytest.approx(lp_norm(f, p), rel=1e-12, abs=1e-300)
    assert weak_lp_norm(g, p) == pytest.approx(weak_lp_norm(f, p), rel=1e-12)


def brute_maximal(vals):
    N = len(vals)
    out = np.zeros(N)
    for i in range(N):
        k = 1
        best = 0.0
        while k <= N:
            j = (i // k) * k
            best = max(best, np.abs(vals[j : j + k]).mean())
            k *= 2
        out[i] = best
    return out


@given(values_1d)
def test_maximal_function_brute_force(v):
    f = GridFunction(UNIT, len(v), v)
    M = maximal_function(f).values.real
    np.testing.assert_allclose(M, brute_maximal(v), rtol=1e-12)
    assert np.all(M >= np.abs(v) - 1e-12)


def test_maximal_function_examples():
    dom = Box((0, 0), (8, 8))
    c = GridFunction(dom, 8, np.full((8, 8), 2.5))
    np.testing.assert_allclose(maximal_function(c).values, 2.5)
    ind = GridFunction.indicator(dom, 8, Box((0, 0), (1, 1)))
    M = maximal_function(ind).values.real
    # at the cell with corner (x, y) the smallest block reaching the origin has side 2^ceil(log2(max+1))
    for x, y in product(range(8), repeat=2):
        side = 1
        while side <= max(x, y):
            side *= 2
        assert M[x, y] >= 1 / side**2 - 1e-12
    assert M[7, 7] == pytest.approx(1 / 64)


@settings(max_examples=40)
@given(values_1d, st.data())
def test_maximal_sublinear(v, data):
    w = data.draw(arrays(np.float64, len(v), elements=finite))
    f, g = GridFunction(UNIT, len(v), v), GridFunction(UNIT, len(v), w)
    lhs = maximal_function(f + g).values.real
    rhs = maximal_function(f).values.real + maximal_function(g).values.real
    assert np.all(lhs <= rhs + 1e-9)


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        GridFunction(UNIT, 4) + GridFunction(UNIT, 8)


def test_binary_round_trip():
    rng = np.random.default_rng(0)
    f = GridFunction(Box((-1, 0), (1, 2)), 4, rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    g = GridFunction.from_bytes(f.to_bytes())
    assert g.same_grid(f)
    np.testing.assert_array_equal(g.values, f.values)
    assert len(f.to_bytes()) == 8 + 32 + 16 * 16


# -- dyadic families ---------------------------------------------------------


def test_square_function_single_cube():
    I = DyadicCube(-2, (1,))
    a = {I: float(I.volume) ** 0.5}
    S = square_function(a, UNIT, 16)
    np.testing.assert_allclose(S.values.real, GridFunction.indicator(UNIT, 16, I.box()).values.real)
    assert seq_lp(a, 1) == pytest.approx(0.25)
    assert john_nirenberg_ratio(a, 1, 3) == pytest.approx(1.0)
    chk = interpolation_check(a, 4)
    assert chk.lhs == pytest.approx(chk.rhs)


def test_pythagorean_additivity():
    a = {DyadicCube(-2, (k,)): complex(k + 1, -k) for k in range(4)}
    assert seq_lp(a, 2) ** 2 == pytest.approx(sum(abs(v) ** 2 for v in a.values()))


def test_square_function_of_disjoint_parts_is_root_sum_of_squares():
    rng = np.random.default_rng(4)
    left = {I: v for I, v in random_dyadic_family(rng, size=10).items() if I.ancestor(0) == DyadicCube(0, (0,))}
    right = {DyadicCube(I.level, tuple(c + 2 ** (-I.level) for c in I.corner)): v for I, v in left.items()}
    dom, N = Box((0,), (2,)), 128
    both = square_function({**left, **right}, dom, N).values.real
    parts = np.hypot(square_function(left, dom, N).values.real, square_function(right, dom, N).values.real)
    np.testing.assert_allclose(both, parts, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([1, 2]))
def test_exact_distribution_matches_sampled_square_function(seed, d):
    rng = np.random.default_rng(seed)
    a = random_dyadic_family(rng, d=d, size=8, depth=4)
    N = 8
    dom = Box((0,) * d, (1,) * d)
    S = square_function(a, dom, N)
    for p in (1, 2, 3.5):
        assert seq_lp(a, p) == pytest.approx(lp_norm(S, p), rel=1e-10)
        assert seq_weak(a, p) == pytest.approx(weak_lp_norm(S, p), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_bmo_crude_bound(seed):
    a = random_dyadic_family(np.random.default_rng(seed), size=10)
    smallest = min(float(I.volume) for I in a)
    assert seq_bmo(a) <= seq_lp(a, 2) / smallest**0.5 * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.5, 4))
def test_john_nirenberg_same_exponent_at_least_one(seed, p):
    a = random_dyadic_family(np.random.default_rng(seed), size=10)
    assert john_nirenberg_ratio(a, p, p) >= 1 - 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_interpolation_collapses_at_two(seed):
    a = random_dyadic_family(np.random.default_rng(seed), size=10)
    chk = interpolation_check(a, 2)
    assert chk.lhs == pytest.approx(chk.rhs)
    with pytest.raises(ValueError):
        interpolation_check(a, 1.5)


def test_dyadic_coefficients_support():
    c = DyadicCoefficients({DyadicCube(0, (1,)): 0, DyadicCube(0, (0,)): 1j})
    assert c.support == [DyadicCube(0, (0,))]
