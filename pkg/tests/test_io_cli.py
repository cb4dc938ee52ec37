import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from tfwave import cli, io
from tfwave.catalog import bilinear_hilbert
from tfwave.config import Config, load_config
from tfwave.estimators import ForestDecomposer, WavePacketTransform
from tfwave.geometry import Box, DyadicCube, ShiftedDyadicCube, Tile, VectorTile
from tfwave.gridfn import GridFunction
from tfwave.harness import ModelConfig, build_collection
from tfwave.subspace import Subspace
from tfwave.trees import random_tile_collection, strongly_disjoint_check

# -- formats -----------------------------------------------------------------

tiles = st.builds(
    lambda lv, c, x, s: Tile(DyadicCube(lv, (c,)), ShiftedDyadicCube(-lv, (x,), (s,))),
    st.integers(-5, 5),
    st.integers(-100, 100),
    st.integers(-100, 100),
    st.integers(0, 2),
)


@given(tiles)
def test_tile_json_round_trip(t):
    assert io.tile_from_json(json.loads(json.dumps(io.tile_to_json(t)))) == t


@given(st.integers(-3, 3), st.lists(st.tuples(st.integers(-50, 50), st.integers(0, 2)), min_size=2, max_size=4))
def test_vector_tile_json_round_trip(lv, parts):
    R = VectorTile(DyadicCube(lv, (0,)), tuple(ShiftedDyadicCube(-lv, (c,), (s,)) for c, s in parts))
    assert io.vector_tile_from_json(json.loads(json.dumps(io.vector_tile_to_json(R)))) == R


def test_collection_json(tmp_path):
    col = build_collection(ModelConfig(bilinear_hilbert(), extent=2))
    path = io.write_json(tmp_path / "c" / "col.json", io.collection_to_json(col))
    data = io.read_json(path)
    assert Subspace.from_json(data["gamma"]).same_span(col.gamma)
    assert [io.vector_tile_from_json(r) for r in data["tiles"]] == col.tiles
    assert "whitney" not in data["meta"]


def test_rows_round_trip(tmp_path):
    rows = [{"a": 1, "b": 2.5}, {"b": "x", "c": True}]
    path = io.write_rows(tmp_path / "r.csv", rows)
    back = io.read_rows(path)
    assert list(back[0]) == ["a", "b", "c"]
    assert back[0]["b"] == "2.5" and back[1]["a"] == "" and back[1]["c"] == "True"


@settings(max_examples=20)
@given(st.integers(1, 2), st.sampled_from([2, 4, 8]), st.integers(0, 10**6))
def test_grid_binary_file(tmp_path_factory, d, N, seed):
    rng = np.random.default_rng(seed)
    f = GridFunction(Box((-1,) * d, (3,) * d), N, rng.normal(size=(N,) * d) + 1j * rng.normal(size=(N,) * d))
    path = io.save_grid(tmp_path_factory.mktemp("g") / "f.bin", f)
    g = io.load_grid(path)
    assert g.same_grid(f)
    np.testing.assert_array_equal(g.values, f.values)


def test_config_overrides(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"C2": 64, "c_d": 0.2}))
    cfg = load_config(p)
    assert cfg.C2 == 64 and cfg.c_d == 0.2 and cfg.C1 == Config().C1
    assert load_config(p, C1=4).C1 == 4
    p.write_text(json.dumps({"C9": 1}))
    with pytest.raises(ValueError):
        load_config(p)
    with pytest.raises(ValueError):
        Config(C1=40)


# -- estimators --------------------------------------------------------------


def test_wave_packet_transform_round_trip():
    grid = GridFunction.from_callable(Box((-32,), (32,)), 512, lambda x: np.exp(-(x**2) / 8) * np.cos(2 * x))
    est = WavePacketTransform(scale=0).fit([grid])
    C = est.transform([grid, grid * 2.0])
    assert C.shape == (2, est.n_features_out_)
    np.testing.assert_allclose(C[1], 2 * C[0])
    back = est.inverse_transform(C[:1])[0]
    # one scale of the frame already reproduces the input
    rel = np.linalg.norm(back.values - grid.values) / np.linalg.norm(grid.values)
    assert rel < 1e-3
    with pytest.raises(ValueError):
        est.inverse_transform(np.zeros((1, 3)))
    assert clone(est).get_params() == {"scale": 0, "radius": 0.24, "margin": 4}


def test_unfitted_transform_raises():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        WavePacketTransform().transform([GridFunction(Box((0,), (1,)), 4)])


def test_forest_decomposer():
    fam = random_tile_collection(np.random.default_rng(3), size=60)
    est = ForestDecomposer()
    assert clone(est).get_params()["c_d"] == Config().c_d
    est.fit(fam.tiles, fam.coefficients)
    assert est.strongly_disjoint()
    assert est.levels_ == sorted(est.levels_, reverse=True)
    covered = sorted(t for f in est.forests_.values() for T in f.trees for t in T.tiles)
    covered += sorted(t for T in est.decomposition_.zero_trees for t in T.tiles)
    assert sorted(covered) == sorted(fam.tiles)
    assert est.tree_count() >= 1
    for f in est.forests_.values():
        assert strongly_disjoint_check(f.trees)
    with pytest.raises(ValueError):
        ForestDecomposer().fit(fam.tiles)
    with pytest.raises(ValueError):
        ForestDecomposer().fit(fam.tiles, [1.0])


# -- command line ------------------------------------------------------------


def run(tmp_path, *argv):
    return cli.main(["--out", str(tmp_path), "--quiet", *argv])


def test_cli_gamma(tmp_path, capsys):
    assert run(tmp_path, "gamma", "check", "mild") == 0
    v = json.loads((tmp_path / "verdict.json").read_text())
    assert v["type1"] is True and v["type2"] is False
    assert run(tmp_path, "gamma", "sample", "--n", "3", "--d", "1", "--m", "1", "--trials", "3") == 0
    assert len(io.read_rows(tmp_path / "sample.csv")) == 3
    path = tmp_path / "g.json"
    path.write_text(json.dumps(bilinear_hilbert().to_json()))
    assert run(tmp_path, "gamma", "check", str(path)) == 0


def test_cli_bad_input_exits_2(tmp_path):
    assert run(tmp_path, "gamma", "check", str(tmp_path / "missing.json")) == 2
    assert run(tmp_path, "model", "build", "--extent", "3") == 2


def test_cli_failed_check_exits_1(tmp_path, monkeypatch):
    bad = Subspace.from_blocks([[[1], [0], [-1]]])
    monkeypatch.setattr(cli, "sample_generic", lambda *a, **k: bad)
    assert run(tmp_path, "gamma", "sample", "--n", "3", "--d", "1", "--m", "1", "--trials", "2") == 1


def test_cli_whitney_and_frame(tmp_path):
    assert run(tmp_path, "whitney", "--lo", "0,0", "--hi", "8,8", "--lmin", "-2", "--lmax", "1") == 0
    assert json.loads((tmp_path / "whitney.json").read_text())["cubes"] > 0
    assert run(tmp_path, "frame", "verify", "--d", "1") == 0
    fr = json.loads((tmp_path / "frame.json").read_text())
    assert fr["partition_residual"] < 1e-10 and fr["reconstruction_error"] < 1e-3


def test_cli_model(tmp_path):
    assert run(tmp_path, "model", "build", "--extent", "2") == 0
    assert (tmp_path / "collection.json").exists() and (tmp_path / "whitney_windows.csv").exists()
    assert run(tmp_path, "model", "run", "--extent", "2") == 0
    assert json.loads((tmp_path / "run.json").read_text())["duality_holds"]
    assert io.load_grid(tmp_path / "operator.bin").N == 8


def test_cli_trees(tmp_path):
    assert run(tmp_path, "trees", "select", "--size", "40", "--axis", "1-") == 0
    sel = json.loads((tmp_path / "select.json").read_text())
    assert sel["strongly_disjoint"] and sel["axis"] == [1, -1]
    assert run(tmp_path, "trees", "decompose", "--size", "40", "--cd", "0.2") == 0
    assert (tmp_path / "decompose.json").exists()


def test_cli_counting_and_rwt(tmp_path):
    assert run(tmp_path, "counting", "audit", "--extent", "4", "--coefficients", "uniform", "--levels", "0,-22") == 0
    c = json.loads((tmp_path / "counting.json").read_text())
    assert c["passed"] and c["case"] == 1
    assert io.read_rows(tmp_path / "counting.csv")
    code = run(tmp_path, "experiment", "rwt", "--exponents", "2,4,4/3", "--extents", "4,8", "--trials", "2")
    summary = json.loads((tmp_path / "rwt_summary.json").read_text())
    assert code == (0 if summary["bounded"] else 1)
    assert (tmp_path / "rwt.csv").exists()
