import json
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfwave.catalog import bilinear_hilbert, fractional_rank_nondegenerate, mildly_degenerate
from tfwave.config import Config
from tfwave.errors import GridMismatch, Type1Required
from tfwave.geometry import Box, DyadicCube, ShiftedDyadicCube, VectorTile, is_grid, is_sparse
from tfwave.gridfn import GridFunction, weak_lp_norm
from tfwave.harness import (
    ExperimentReport,
    ModelConfig,
    build_collection,
    counting_experiment,
    discrete_form,
    discrete_operator,
    exceptional_set,
    exponent_recipe,
    form_from_coefficients,
    restricted_weak_experiment,
    shell_levels,
    unimodular_phases,
    weak_norm_duality_check,
)
from tfwave.subspace import IndexFamily, Subspace
from tfwave.vectortrees import theorem_case
from tfwave.wavepackets import FrameProfile, inner_product, make_wave_packet

# -- configuration -----------------------------------------------------------


def test_model_config_validation():
    g = bilinear_hilbert()
    with pytest.raises(ValueError):
        ModelConfig(g, extent=12)
    with pytest.raises(ValueError):
        ModelConfig(g, exponents=(2, 2, 2))  # 1/2 + 1/2 != 1/2
    with pytest.raises(ValueError):
        ModelConfig(g, exponents=(2, 2))
    cfg = ModelConfig(g, exponents=(2, 4, F(4, 3)))
    data = cfg.to_dict()
    assert Subspace.from_json(data["gamma"]).same_span(g)
    assert json.loads(json.dumps(data))["extent"] == 16


# -- collections -------------------------------------------------------------


@pytest.mark.parametrize(
    "gamma,levels,extent",
    [(bilinear_hilbert(), (0,), 4), (bilinear_hilbert(), (0, -22), 8), (fractional_rank_nondegenerate(), (0,), 2), (mildly_degenerate(), (0,), 2)],
)
def test_collection_hypotheses(gamma, levels, extent):
    col = build_collection(ModelConfig(gamma, levels=levels, extent=extent, seed=1))
    assert col.hypotheses["all"]
    n, d = gamma.n, gamma.d
    for j in range(n):
        fam = [f[j] for f in col.frequencies]
        assert is_grid(fam) and is_sparse(fam, Config().C3)
    # all components of one frequency vector share a scale, and the sum of the cubes meets 0
    for f in col.frequencies:
        assert len({x.level for x in f}) == 1
        for k in range(d):
            assert sum(x.lo[k] for x in f) <= 0 <= sum(x.lo[k] + x.side for x in f)
    # per frequency vector: the spatial cubes tile the domain, or one coarse cube covers it
    for f in col.frequencies:
        cubes = [R.I for R in col.tiles if R.Xis == f]
        if len(cubes) == 1 and cubes[0].box().contains(col.domain):
            continue
        assert sum(c.volume for c in cubes) == col.domain.volume
        assert all(col.domain.contains(c.box()) for c in cubes)
    # levels are frequency levels, so the spatial level is their negative
    assert {R.I.level for R in col.tiles} <= {-l for l in levels}


def test_two_levels_appear_in_one_collection():
    col = build_collection(ModelConfig(bilinear_hilbert(), levels=(0, -22), extent=8))
    assert len({f[0].level for f in col.frequencies}) == 2


def test_collection_refuses_type1_failure():
    with pytest.raises(Type1Required):
        build_collection(ModelConfig(Subspace.from_blocks([[[1], [0], [-1]]])))


def test_odd_level_gap_rejected():
    with pytest.raises(ValueError):
        build_collection(ModelConfig(bilinear_hilbert(), levels=(0, -3)))


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10**4))
def test_collection_is_seed_deterministic(seed):
    cfg = ModelConfig(bilinear_hilbert(), extent=2, seed=seed)
    assert build_collection(cfg).tiles == build_collection(cfg).tiles


# -- the form and operator on hand-made tiles --------------------------------


def small_tiles():
    out = []
    for c, fs in [(0, (0, 2, -3)), (1, (1, -2, 0)), (-2, (3, 3, -7))]:
        out.append(VectorTile(DyadicCube(0, (c,)), tuple(ShiftedDyadicCube(0, (f,), (0,)) for f in fs)))
    out.append(VectorTile(DyadicCube(1, (0,)), tuple(ShiftedDyadicCube(-1, (f,), (1,)) for f in (0, 1, -2))))
    return out


@pytest.fixture(scope="module")
def p1():
    return FrameProfile(1)


@pytest.fixture(scope="module")
def fs():
    rng = np.random.default_rng(0)
    grid = GridFunction(Box((-64,), (64,)), 1024)
    return [grid.with_values(np.exp(-(grid.axis(0) / 6) ** 2) * rng.normal(size=1024)) for _ in range(3)]


def test_discrete_form_matches_direct_packets(p1, fs):
    tiles = small_tiles()
    direct = 0.0
    for R in tiles:
        term = float(R.I.volume) ** (1 - 3 / 2)
        for j, f in enumerate(fs):
            term *= abs(inner_product(f, make_wave_packet(R.component(j), p1, f)))
        direct += term
    assert discrete_form(tiles, fs, p1) == pytest.approx(direct, rel=1e-10)
    assert discrete_form([], fs, p1) == 0
    with pytest.raises(GridMismatch):
        discrete_form(tiles, fs[:2], p1)


def test_form_from_coefficients_example():
    R = VectorTile(DyadicCube(2, (0,)), tuple(ShiftedDyadicCube(-2, (f,), (0,)) for f in (0, 1, -1)))
    # |I|^(1 - 3/2) = 4^(-1/2)
    assert form_from_coefficients([R], [np.array([2.0]), np.array([-3.0]), np.array([1j])]) == pytest.approx(3.0)


def test_operator_pairs_with_the_form(p1, fs):
    tiles = small_tiles()
    phases = unimodular_phases(len(tiles), np.random.default_rng(1))
    T = discrete_operator(tiles, fs[:2], phases, p1)
    g = fs[2]
    # <T(f1, f2), g> = sum_R c_R |I|^(-1/2) <f1|phi_1> <f2|phi_2> <phi_3|g>
    expect = 0
    for c, R in zip(phases, tiles):
        w = c * float(R.I.volume) ** -0.5
        for j in range(2):
            w *= inner_product(fs[j], make_wave_packet(R.component(j), p1, g))
        expect += w * inner_product(make_wave_packet(R.component(2), p1, g), g)
    assert inner_product(T, g) == pytest.approx(expect, rel=1e-9)
    # |<T, g>| never exceeds the form with |g| in the last slot
    assert abs(inner_product(T, g)) <= discrete_form(tiles, fs, p1) * (1 + 1e-9)
    assert np.all(discrete_operator([], fs[:2], [], p1).values == 0)


def test_unimodular_phases():
    assert np.all(unimodular_phases(4) == 1)
    np.testing.assert_allclose(np.abs(unimodular_phases(50, np.random.default_rng(0))), 1)


# -- exceptional sets and shells ---------------------------------------------


def test_exceptional_set_escalates_to_half(p1):
    dom = Box((0,), (64,))
    E1 = GridFunction.indicator(dom, 64, Box((0,), (2,)))
    En = GridFunction(dom, 64, np.ones(64))
    exc = exceptional_set([E1], En, 0.01)
    assert exc.ratio <= 0.5 and exc.escalations
    assert exc.C == pytest.approx(0.01 * 2 ** len(exc.escalations))
    # M(1_E1 / |E1|) is 1/2 on E1 and decays like 1/(2 |x|)
    fixed = exceptional_set([E1], En, 0.01, escalate=False)
    assert fixed.ratio > 0.5 and not fixed.escalations
    with pytest.raises(ValueError):
        exceptional_set([E1], GridFunction(dom, 64), 1.0)


def test_exceptional_set_contains_the_concentrated_set():
    dom = Box((0, 0), (16, 16))
    E1 = GridFunction.indicator(dom, 16, Box((4, 4), (6, 6)))
    En = GridFunction(dom, 16, np.ones((16, 16)))
    exc = exceptional_set([E1], En, 4.0)
    assert np.all(exc.omega.values.real[4:6, 4:6] == 1)
    assert exc.ratio <= 0.5


def test_shell_levels_example():
    omega = np.zeros(32, dtype=bool)
    omega[8:24] = True
    tiles = [VectorTile(DyadicCube(0, (c,)), (ShiftedDyadicCube(0, (0,)),) * 3) for c in (0, 8, 15, 12)]
    shells = shell_levels(tiles, omega, (F(0),), 1)
    # outside Omega -> 0; cell 8 touches the edge; cell 15 is 8 cells inside; cell 12 is 4 inside
    assert shells[0] == 0 and shells[1] == 0
    assert shells[2] == math.floor(math.log2(1 + 7))
    assert shells[3] == math.floor(math.log2(1 + 4))


@pytest.mark.parametrize("n,d,m", [(3, 1, 1), (4, 1, 1), (4, 2, 3), (6, 2, 5), (4, 3, 5)])
def test_exponent_recipe_gains_positive(n, d, m):
    r = exponent_recipe(n, d, m)
    assert r["case"] == theorem_case(n, d, m)
    assert len(r["alpha"]) == n and len(r["gains"]) == n - 1
    assert all(g > 0 for g in r["gains"])
    assert all(0 <= a <= 0.5 for a in r["alpha"])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(1.1, 6))
def test_weak_duality_upper_bound(seed, q):
    rng = np.random.default_rng(seed)
    f = GridFunction(Box((0,), (4,)), 64, rng.standard_cauchy(64))
    rep = weak_norm_duality_check(f, q, trials=16, seed=seed)
    (row,) = rep.select("weak_norm_vs_dual")
    assert row["lhs"] == pytest.approx(weak_lp_norm(f, q))
    # integrating the distribution function: sum over E of |f| <= q' ||f||_{q,inf} |E|^(1 - 1/q)
    assert row["rhs"] <= q / (q - 1) * row["lhs"] * (1 + 1e-12)


# -- experiments -------------------------------------------------------------


def test_report_round_trip(tmp_path):
    rep = ExperimentReport("demo", provenance={"seed": 1})
    rep.add("x", 1.0, 2.0, k=3)
    rep.add("y", 0.0, 0.0)
    rep.add("z", 1.0, 0.0, extra="e")
    assert [r["ratio"] for r in rep.rows] == [0.5, 0.0, math.inf]
    jp, cp = rep.write(tmp_path)
    assert json.loads(jp.read_text())["rows"][0]["k"] == 3
    header = cp.read_text().splitlines()[0].split(",")
    assert header == ["quantity", "lhs", "rhs", "ratio", "k", "extra"]


def test_restricted_weak_experiment_rows():
    cfg = ModelConfig(bilinear_hilbert(), exponents=(2, 4, F(4, 3)), extent=4)
    rep = restricted_weak_experiment(cfg, extents=(4, 8), trials=2)
    meds = rep.select("rwt_median")
    assert [r["extent"] for r in meds] == [4, 8]
    assert all(0 < r["lhs"] < math.inf for r in meds)
    assert len(rep.select("rwt_ratio")) == 4
    assert rep.select("shell_mass")
    with pytest.raises(ValueError):
        restricted_weak_experiment(ModelConfig(bilinear_hilbert(), extent=4))


@pytest.mark.parametrize("coefficients", ["sets", "uniform"])
def test_counting_bht(coefficients):
    run = counting_experiment(ModelConfig(bilinear_hilbert(), extent=8, seed=2, levels=(0, -22)), coefficients=coefficients)
    assert run.strata >= 1 and run.audits
    assert all(a.case == 1 for a in run.audits)
    assert all(a.passed for a in run.audits)
    assert all(s.holds for s in run.separations)
    assert run.ge2_trees + run.eq1_tiles >= run.strata


def test_counting_fractional_case2():
    cfg = ModelConfig(fractional_rank_nondegenerate(), constants=Config(C2=64), extent=4)
    run = counting_experiment(cfg)
    assert all(a.case == 2 for a in run.audits)
    assert all(a.passed for a in run.audits)
    assert any(a.rows for a in run.audits)


def test_counting_mild_on_a_good_family():
    fam = [IndexFamily.medium((3,), (1,), (2,))]
    cfg = ModelConfig(mildly_degenerate(), constants=Config(C2=128), extent=2)
    run = counting_experiment(cfg, families=fam)
    assert all(a.passed for a in run.audits)
    assert {r.family for a in run.audits for r in a.rows} <= {"A=3;B=1;B=2"}


def test_unknown_coefficient_mode():
    with pytest.raises(ValueError):
        counting_experiment(ModelConfig(bilinear_hilbert(), extent=2), coefficients="bogus")
