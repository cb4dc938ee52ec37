"""Command line entry point: ``tfwave <group> <command> [options]``.

Every command writes JSON (and CSV where rows exist) under ``--out`` and
exits with status 1 when an invariant check fails, 2 on bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import io
from .catalog import NAMED, by_name
from .config import Config, load_config
from .errors import InvariantViolation, TfwaveError
from .geometry import Box, whitney_decompose
from .gridfn import GridFunction
from .subspace import Subspace, applicable_checks, sample_generic, verdict

log = logging.getLogger("tfwave")


class CheckFailed(Exception):
    """An assert-class invariant did not hold; the command exits with status 1."""


def _gamma(spec: str) -> Subspace:
    if spec in NAMED:
        return by_name(spec)
    return Subspace.from_json(Path(spec).read_text())


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, name: str, data) -> None:
    path = io.write_json(_out(args) / f"{name}.json", data)
    log.info("wrote %s", path)
    print(json.dumps(data, indent=2, default=str) if not args.quiet else path)


def _constants(args) -> Config:
    return load_config(args.config)


# -- gamma -------------------------------------------------------------------


def cmd_gamma_check(args) -> None:
    gamma = _gamma(args.subspace)
    out = verdict(gamma)
    out.update({"n": gamma.n, "d": gamma.d, "m": gamma.m})
    _emit(args, "verdict", out)


def cmd_gamma_sample(args) -> None:
    app = applicable_checks(args.n, args.d, args.m)
    rows, failures = [], 0
    for t in range(args.trials):
        g = sample_generic(args.n, args.d, args.m, seed=args.seed + t)
        v = verdict(g)
        ok = all(v[k] is not False for k, on in app.items() if on)
        failures += not ok
        rows.append({"trial": t, "seed": args.seed + t, "type1": v["type1"], "type2": v["type2"], "pass": int(ok)})
    io.write_rows(_out(args) / "sample.csv", rows)
    _emit(args, "sample", {"n": args.n, "d": args.d, "m": args.m, "trials": args.trials, "failures": failures, "applicable": app})
    if failures:
        raise CheckFailed(f"{failures} generic samples failed an applicable check")


# -- geometry ----------------------------------------------------------------


def _parse_vector(text: str) -> tuple[Fraction, ...]:
    return tuple(Fraction(x) for x in text.split(","))


def cmd_whitney(args) -> None:
    gamma = _gamma(args.subspace)
    indices = [int(i) for i in args.indices.split(",")] if args.indices else list(range(1, gamma.n))
    basis = gamma.projection_basis(indices)
    window = Box(_parse_vector(args.lo), _parse_vector(args.hi))
    res = whitney_decompose(basis, window, (args.lmin, args.lmax), Fraction(args.C1))
    io.write_rows(_out(args) / "whitney.csv", res.rows)
    _emit(
        args,
        "whitney",
        {
            "cubes": len(res),
            "dropped_volume": str(res.dropped_volume),
            "c_measured": res.c_measured,
            "C_measured": res.C_measured,
            "C_interior": res.C_interior,
        },
    )


def cmd_frame_verify(args) -> None:
    from .wavepackets import FrameProfile, frame_reconstruct

    rng = np.random.default_rng(args.seed)
    prof = FrameProfile(args.d, _constants(args).bump_radius)
    xi = rng.uniform(-50, 50, size=(args.n_samples, args.d))
    residual = float(np.max(np.abs(prof.partition_sum(xi) - 1.0)))
    N = args.N or (512 if args.d == 1 else 128)
    dom = Box((Fraction(-16),) * args.d, (Fraction(16),) * args.d)
    bump = GridFunction.from_callable(dom, N, lambda *xs: np.exp(-sum(x * x for x in xs) / 8.0) * np.exp(2j * np.pi * 0.3 * xs[0]))
    rec = frame_reconstruct(bump, args.scale, prof)
    tol = 1e-3 if args.d == 1 else 1e-2
    out = {"d": args.d, "scale": args.scale, "N": N, "partition_residual": residual, "reconstruction_error": rec.relative_error, "tiles": rec.n_tiles, "tolerance": tol}
    _emit(args, "frame", out)
    if residual >= 1e-10 or rec.relative_error >= tol:
        raise CheckFailed("frame identity outside tolerance")


# -- model -------------------------------------------------------------------


def _model_config(args):
    from .harness import ModelConfig

    levels = tuple(int(x) for x in args.levels.split(","))
    exps = tuple(float(Fraction(x)) for x in args.exponents.split(",")) if args.exponents else None
    return ModelConfig(
        _gamma(args.subspace),
        constants=_constants(args),
        anchors=args.anchors,
        extent=args.extent,
        levels=levels,
        exponents=exps,
        random_phases=args.random_phases,
        seed=args.seed,
    )


def cmd_model_build(args) -> None:
    from .harness import build_collection

    col = build_collection(_model_config(args))
    io.write_json(_out(args) / "collection.json", io.collection_to_json(col))
    io.write_rows(_out(args) / "whitney_windows.csv", col.meta["whitney"])
    _emit(args, "build", {"tiles": len(col), "frequency_vectors": len(col.frequencies), "hypotheses": col.hypotheses})
    if not col.hypotheses["all"]:
        raise CheckFailed("collection fails the admissibility checks")


def cmd_model_run(args) -> None:
    from .harness import build_collection, discrete_form, discrete_operator, unimodular_phases
    from .wavepackets import FrameProfile

    cfg = _model_config(args)
    col = build_collection(cfg)
    d, n = cfg.gamma.d, cfg.gamma.n
    rng = np.random.default_rng(cfg.seed)
    lo, hi = col.domain.lo, col.domain.hi
    N = max(8, 4 * cfg.extent) if d == 1 else max(8, 2 * cfg.extent)
    fs = [GridFunction(col.domain, N, rng.normal(size=(N,) * d) + 1j * rng.normal(size=(N,) * d)) for _ in range(n)]
    prof = FrameProfile(d, cfg.constants.bump_radius)
    form = discrete_form(col.tiles, fs, prof)
    phases = unimodular_phases(len(col.tiles), rng if cfg.random_phases else None)
    T = discrete_operator(col.tiles, fs[:-1], phases, prof)
    pairing = abs(complex(np.sum(T.values * np.conj(fs[-1].values)) * float(T.cell_volume)))
    io.save_grid(_out(args) / "operator.bin", T)
    out = {"tiles": len(col), "form": form, "pairing": pairing, "duality_holds": pairing <= form * (1 + 1e-9) + 1e-300, "domain": [[str(x) for x in lo], [str(x) for x in hi]]}
    _emit(args, "run", out)
    if not out["duality_holds"]:
        raise CheckFailed("duality bound |<T f, f_n>| <= form failed")


# -- trees -------------------------------------------------------------------


def _random_family(args):
    from .trees import random_tile_collection

    rng = np.random.default_rng(args.seed)
    return random_tile_collection(rng, size=args.size, d=args.d, config=_constants(args))


def _axis(text: str) -> tuple[int, int]:
    k, sign = text[:-1], text[-1]
    if sign not in "+-":
        raise argparse.ArgumentTypeError("axis looks like 1+ or 2-")
    return int(k), 1 if sign == "+" else -1


def cmd_trees_select(args) -> None:
    from .trees import TileOrder, mass, select_trees, strongly_disjoint_check

    cfg = _constants(args)
    fam = _random_family(args)
    ctx = TileOrder(fam.tiles, cfg)
    coeffs = [fam.coefficients[t] for t in fam.tiles]
    lam = args.lam if args.lam is not None else mass(fam.tiles, coeffs, ctx)
    k, sign = args.axis
    res = select_trees(fam.tiles, coeffs, lam, k, sign, ctx, c_d=args.cd)
    disjoint = strongly_disjoint_check(res.trees)
    _emit(args, "select", {"lambda": lam, "axis": [k, sign], "trees": [T.to_json() for T in res.trees], "residual": len(res.residual), "strongly_disjoint": disjoint})
    if not disjoint:
        raise CheckFailed("selected trees are not strongly disjoint")


def cmd_trees_decompose(args) -> None:
    from .estimators import ForestDecomposer

    cfg = _constants(args)
    fam = _random_family(args)
    est = ForestDecomposer(cfg.C1, cfg.C2, cfg.C3, args.cd if args.cd is not None else cfg.c_d)
    est.fit(fam.tiles, fam.coefficients)
    _emit(args, "decompose", est.decomposition_.to_json())
    if not est.strongly_disjoint():
        raise CheckFailed("a forest is not strongly disjoint")


# -- counting ----------------------------------------------------------------


def cmd_counting_audit(args) -> None:
    from .harness import counting_experiment
    from .vectortrees import AuditRow

    cfg = _model_config(args)
    run = counting_experiment(cfg, case=args.case, coefficients=args.coefficients)
    rows = []
    for i, a in enumerate(run.audits):
        for r in a.rows:
            rows.append({"audit": i, "cell": r.cell, "x": " ".join(str(v) for v in r.x), "lhs": r.lhs, "rhs": r.rhs, "constant": r.constant, "family": r.family, "pass": int(r.passed)})
    io.write_rows(_out(args) / "counting.csv", rows, ["audit", "cell", "x", "lhs", "rhs", "constant", "family", "pass"])
    seps = [{"pairs": s.pairs, "min_ratio": s.min_ratio, "threshold": s.threshold, "holds": s.holds} for s in run.separations]
    passed = all(a.passed for a in run.audits)
    _emit(args, "counting", {"case": run.audits[0].case if run.audits else args.case, "strata": run.strata, "trees_ge2": run.ge2_trees, "tiles_eq1": run.eq1_tiles, "rows": len(rows), "passed": passed, "separation": [s for s in seps if s["pairs"]]})
    if not passed:
        raise CheckFailed("counting audit failed")


# -- experiments -------------------------------------------------------------


def cmd_experiment_rwt(args) -> None:
    from .harness import restricted_weak_experiment

    cfg = _model_config(args)
    extents = tuple(int(x) for x in args.extents.split(","))
    rep = restricted_weak_experiment(cfg, extents=extents, trials=args.trials)
    rep.write(_out(args))
    med = rep.select("rwt_median")
    growth = [b["ratio"] / a["ratio"] if a["ratio"] else float("inf") for a, b in zip(med, med[1:])]
    _emit(args, "rwt_summary", {"medians": [(r["tiles"], r["ratio"]) for r in med], "growth": growth, "bounded": all(g < 2 for g in growth)})
    if any(g >= 2 for g in growth):
        raise CheckFailed("ratio grew by 2x or more between consecutive sizes")


# -- parser ------------------------------------------------------------------


def _model_args(p: argparse.ArgumentParser, extent: int = 16) -> None:
    p.add_argument("--subspace", default="bht", help=f"named subspace ({', '.join(sorted(NAMED))}) or JSON file")
    p.add_argument("--extent", type=int, default=extent)
    p.add_argument("--levels", default="0", help="comma separated frequency levels")
    p.add_argument("--anchors", type=int, default=4)
    p.add_argument("--exponents", default=None, help="p_1,...,p_{n-1},q (fractions allowed)")
    p.add_argument("--random-phases", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfwave", description="Discrete time-frequency models over singular subspaces.")
    parser.add_argument("--config", default=None, help="JSON file overriding the global constants")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="tfwave-out")
    parser.add_argument("--quiet", action="store_true", help="print output paths instead of JSON")
    parser.add_argument("-v", "--verbose", action="store_true")
    groups = parser.add_subparsers(dest="group", required=True)

    g = groups.add_parser("gamma").add_subparsers(dest="command", required=True)
    p = g.add_parser("check")
    p.add_argument("subspace")
    p.set_defaults(fn=cmd_gamma_check)
    p = g.add_parser("sample")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(fn=cmd_gamma_sample)

    p = groups.add_parser("whitney")
    p.add_argument("--subspace", default="bht")
    p.add_argument("--indices", default=None, help="1-based blocks to project onto (default 1..n-1)")
    p.add_argument("--lo", required=True, help="window corner, comma separated")
    p.add_argument("--hi", required=True)
    p.add_argument("--lmin", type=int, default=-4)
    p.add_argument("--lmax", type=int, default=0)
    p.add_argument("--C1", default="8")
    p.set_defaults(fn=cmd_whitney)

    f = groups.add_parser("frame").add_subparsers(dest="command", required=True)
    p = f.add_parser("verify")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--scale", type=int, default=0)
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--N", type=int, default=None)
    p.set_defaults(fn=cmd_frame_verify)

    m = groups.add_parser("model").add_subparsers(dest="command", required=True)
    p = m.add_parser("build")
    _model_args(p)
    p.set_defaults(fn=cmd_model_build)
    p = m.add_parser("run")
    _model_args(p)
    p.set_defaults(fn=cmd_model_run)

    t = groups.add_parser("trees").add_subparsers(dest="command", required=True)
    for name, fn in (("select", cmd_trees_select), ("decompose", cmd_trees_decompose)):
        p = t.add_parser(name)
        p.add_argument("--size", type=int, default=60)
        p.add_argument("--d", type=int, default=1)
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--cd", type=float, default=None)
        p.add_argument("--axis", type=_axis, default=(1, 1), help="lacunary type such as 1+ or 2-")
        p.set_defaults(fn=fn)

    c = groups.add_parser("counting").add_subparsers(dest="command", required=True)
    p = c.add_parser("audit")
    _model_args(p, extent=8)
    p.add_argument("--case", type=int, choices=(1, 2, 3), default=None)
    p.add_argument("--coefficients", choices=("sets", "uniform"), default="sets")
    p.set_defaults(fn=cmd_counting_audit)

    e = groups.add_parser("experiment").add_subparsers(dest="command", required=True)
    p = e.add_parser("rwt")
    _model_args(p)
    p.add_argument("--extents", default="16,128,1024")
    p.add_argument("--trials", type=int, default=3)
    p.set_defaults(fn=cmd_experiment_rwt)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.fn(args)
    except (CheckFailed, InvariantViolation) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    except (TfwaveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
