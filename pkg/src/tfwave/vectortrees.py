"""Vector trees: organizing a stratum, projection maps to scalar forests, counting audits."""
from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .config import DEFAULT, Config, exact_power
from .errors import InvariantViolation, NoDominatingMaximal, RankOutOfRange
from .geometry import DyadicCube, Tile, VectorTile, distance
from .subspace import IndexFamily, enumerate_families
from .trees import Decomposition, TileOrder, tile_le, tile_lesssim


# -- Katz-Tao chains ---------------------------------------------------------


def katz_tao_constant(L: int) -> Fraction:
    """c_1 = 1 and c_{L+1} = c_L / 2^L."""
    if L < 1:
        raise ValueError("L must be at least 1")
    c = Fraction(1)
    for l in range(1, L):
        c /= 2**l
    return c


@dataclass
class KatzTaoResult:
    count: int
    bound: Fraction
    L: int

    @property
    def holds(self) -> bool:
        return self.count >= self.bound


def chain_count(omega: Sequence[Hashable], maps: Sequence[Mapping]) -> int:
    """#{(w_1..w_L): h_l(w_l) = h_l(w_{l+1}) for every l}, L = len(maps) + 1."""
    n = len(omega)
    vec = np.ones(n, dtype=object)
    for h in reversed(maps):
        fibre: dict = defaultdict(int)
        for w, v in zip(omega, vec):
            fibre[h[w]] += v
        vec = np.array([fibre[h[w]] for w in omega], dtype=object)
    return int(sum(vec))


def katz_tao_chains(omega: Sequence[Hashable], maps: Sequence[Mapping], codomain_sizes: Sequence[int] | None = None) -> KatzTaoResult:
    L = len(maps) + 1
    if codomain_sizes is None:
        codomain_sizes = [len(set(h[w] for w in omega)) for h in maps]
    count = chain_count(omega, maps)
    denom = 1
    for z in codomain_sizes:
        denom *= z
    bound = katz_tao_constant(L) * Fraction(len(omega) ** L, denom)
    return KatzTaoResult(count, bound, L)


def set_partitions(n: int, max_blocks: int) -> Iterable[tuple[int, ...]]:
    """Restricted growth strings of length n using at most max_blocks labels."""
    if n == 0:
        yield ()
        return

    def grow(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for b in range(min(top + 2, max_blocks)):
            prefix.append(b)
            yield from grow(prefix, max(top, b))
            prefix.pop()

    yield from grow([0], 0)


@dataclass
class KatzTaoSweep:
    cases: int
    violations: list
    tightest: float


def katz_tao_exhaustive(max_omega: int = 6, max_L: int = 3, max_z: int = 4) -> KatzTaoSweep:
    """Check the chain inequality for every map family up to the given sizes.

    The chain count only sees the fibres of each map, so maps are enumerated as
    set partitions of Omega into at most #Z blocks; relabelling Z changes nothing.
    """
    cases, violations, tightest = 0, [], math.inf
    for size in range(1, max_omega + 1):
        omega = list(range(size))
        for L in range(1, max_L + 1):
            for zs in product(range(1, max_z + 1), repeat=L - 1):
                parts = [list(set_partitions(size, z)) for z in zs]
                for choice in product(*parts):
                    maps = [dict(zip(omega, p)) for p in choice]
                    r = katz_tao_chains(omega, maps, zs)
                    cases += 1
                    if not r.holds:
                        violations.append((size, L, zs, choice, r.count, r.bound))
                    tightest = min(tightest, float(r.count / r.bound))
    return KatzTaoSweep(cases, violations, tightest)


# -- vector order relations and organizing -----------------------------------


def vt_le(a: VectorTile, b: VectorTile) -> bool:
    return all(tile_le(x, y) for x, y in zip(a.tiles, b.tiles))


def vt_lesssim(a: VectorTile, b: VectorTile, ctxs: Sequence[TileOrder]) -> bool:
    return all(tile_lesssim(x, y, c) for x, y, c in zip(a.tiles, b.tiles, ctxs))


@dataclass
class VectorTree:
    tiles: tuple[VectorTile, ...]
    top: VectorTile

    @property
    def I(self) -> DyadicCube:
        return self.top.I

    def __len__(self):
        return len(self.tiles)


@dataclass
class Organized:
    trees: list[VectorTree]

    @property
    def ge2(self) -> list[VectorTree]:
        return [T for T in self.trees if len(T) >= 2]

    @property
    def eq1(self) -> list[VectorTree]:
        return [T for T in self.trees if len(T) == 1]


def _scale(P: VectorTile) -> Fraction:
    return P.component(0).Xi.side


def organize(stratum: Iterable[VectorTile], ctxs: Sequence[TileOrder]) -> Organized:
    """Maximal vector tiles in order of smallest frequency scale each take every
    remaining tile they dominate."""
    remaining = sorted(set(stratum))
    maximal = [P for P in remaining if not any(Q != P and vt_lesssim(P, Q, ctxs) for Q in remaining)]
    maximal.sort(key=lambda P: (_scale(P), P))
    left = set(remaining)
    trees = []
    for P in maximal:
        members = tuple(sorted(R for R in left if vt_lesssim(R, P, ctxs)))
        if P not in members:
            raise InvariantViolation(f"maximal tile {P} was absorbed by an earlier tree")
        left -= set(members)
        trees.append(VectorTree(members, P))
    if left:
        raise InvariantViolation("organize left tiles unassigned")
    return Organized(trees)


def separation_threshold(config: Config = DEFAULT) -> Fraction:
    """Distances below tau * max scale between tops force equal trees: C2 (W/2 - 2) - 1."""
    W = exact_power(config.C3, Fraction(1, 3))
    return config.C2 * (W / 2 - 2) - 1


@dataclass
class SeparationReport:
    pairs: int
    min_ratio: float
    threshold: float

    @property
    def holds(self) -> bool:
        return self.pairs == 0 or self.min_ratio > self.threshold


def separation_report(org: Organized, config: Config = DEFAULT) -> SeparationReport:
    """Smallest d(Ξ(P), Ξ(P')) / max s over distinct trees in F>=2 with overlapping tops."""
    trees = org.ge2
    best, pairs = math.inf, 0
    for A, B in combinations(trees, 2):
        if not (A.I.contains(B.I) or B.I.contains(A.I)):
            continue
        pairs += 1
        d = distance(A.top.frequency_box(), B.top.frequency_box())
        s = max(_scale(A.top), _scale(B.top))
        best = min(best, float(d / s))
    return SeparationReport(pairs, best, float(separation_threshold(config)))


# -- projections to scalar forests -------------------------------------------


class ForestIndex:
    """Tile -> (lambda, tree number) for one coordinate's decomposition."""

    def __init__(self, dec: Decomposition):
        self.dec = dec
        self.where: dict[Tile, tuple[float, int]] = {}
        self.tops: dict[float, list[DyadicCube]] = {}
        for lam, part in dec.levels.items():
            self.tops[lam] = [T.top for T in part.forest.trees]
            for i, T in enumerate(part.forest.trees):
                for t in T.tiles:
                    self.where[t] = (lam, i)
        self.tops[0.0] = [T.top for T in dec.zero_trees]
        for i, T in enumerate(dec.zero_trees):
            for t in T.tiles:
                self.where[t] = (0.0, i)

    def level(self, t: Tile) -> float:
        return self.where[t][0]

    def tree_of(self, t: Tile) -> tuple[float, int]:
        return self.where[t]


def strata(vtiles: Iterable[VectorTile], indices: Sequence[ForestIndex]) -> dict[tuple[float, ...], list[VectorTile]]:
    out: dict[tuple, list] = defaultdict(list)
    for R in vtiles:
        out[tuple(ix.level(R.component(j)) for j, ix in enumerate(indices))].append(R)
    return {k: sorted(v) for k, v in sorted(out.items(), reverse=True)}


def sigma(T: VectorTree, j: int, indices: Sequence[ForestIndex]) -> tuple[float, int]:
    """The j-tree (1-based j) holding the top's j-component."""
    return indices[j - 1].tree_of(T.top.component(j - 1))


def kappa_level(a: complex, I: DyadicCube) -> float:
    """Dyadic kappa with kappa/2 < |a| / |I|^(1/2) <= kappa (0 for a = 0)."""
    v = abs(a) / math.sqrt(float(I.volume))
    if v == 0:
        return 0.0
    k = 2.0 ** math.ceil(math.log2(v))
    if k / 2 >= v:
        k /= 2
    elif k < v:
        k *= 2
    return k


def kappa_stratify(vtiles: Iterable[VectorTile], coefficients: Sequence[Mapping[Tile, complex]]) -> dict[tuple[float, ...], list[VectorTile]]:
    out: dict[tuple, list] = defaultdict(list)
    for R in vtiles:
        key = tuple(kappa_level(coefficients[j].get(R.component(j), 0), R.I) for j in range(R.n))
        out[key].append(R)
    return {k: sorted(v) for k, v in sorted(out.items(), reverse=True)}


def maximal_elements(tiles: Iterable[Tile]) -> list[Tile]:
    """Maximal elements under R <= R' (spatial inclusion, reversed frequency inclusion)."""
    tiles = sorted(set(tiles))
    return [t for t in tiles if not any(u != t and tile_le(t, u) for u in tiles)]


def sigma_prime(P: VectorTile, j: int, maximal: Sequence[Tile]) -> Tile:
    """Smallest (in tile order) maximal element dominating P's j-component (1-based j)."""
    t = P.component(j - 1)
    for R in sorted(maximal):
        if tile_le(t, R):
            return R
    raise NoDominatingMaximal(f"no maximal element dominates {t}")


# -- x-cells -----------------------------------------------------------------


def x_cells(cubes: Iterable[DyadicCube]) -> list[tuple[Fraction, ...]]:
    """One point in every nonempty atom Q minus (cubes strictly inside Q).

    Counting functions built from these cubes are constant on atoms, so
    checking these points checks every x.
    """
    cubes = sorted(set(cubes), key=lambda c: (-c.level, c.corner))
    out = []
    for Q in cubes:
        inner = [c for c in cubes if c != Q and Q.contains(c)]
        p = _free_point(Q, inner)
        if p is not None:
            out.append(p)
    return out


def _free_point(Q: DyadicCube, inner: list[DyadicCube]):
    if not inner:
        return Q.center
    if Q in inner:
        return None
    for C in Q.children():
        sub = [c for c in inner if C.contains(c)]
        if C in sub:
            continue
        if not sub:
            return C.center
    for C in Q.children():
        sub = [c for c in inner if C.contains(c)]
        if C in sub:
            continue
        p = _free_point(C, sub)
        if p is not None:
            return p
    return None


# -- counting audits ---------------------------------------------------------


def theorem_case(n: int, d: int, m: int) -> int:
    q = Fraction(m, d)
    if not q < Fraction(n, 2):
        raise RankOutOfRange(f"need m/d < n/2, got m/d={q}, n={n}")
    if math.ceil(q) < Fraction(n, 2):
        return 1
    return 2 if q <= Fraction(n - 1, 2) else 3


@dataclass
class AuditRow:
    cell: int
    x: tuple
    lhs: int
    rhs: float
    constant: float
    family: str
    injective: bool

    @property
    def passed(self) -> bool:
        return self.injective and self.lhs <= self.rhs * (1 + 1e-12)


@dataclass
class AuditReport:
    case: int
    rows: list[AuditRow] = field(default_factory=list)
    geometric: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and all(l <= g * (1 + 1e-12) for _, l, g in self.geometric)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "x", "lhs", "rhs", "constant", "family", "pass"])
            for r in self.rows:
                w.writerow([r.cell, " ".join(str(v) for v in r.x), r.lhs, repr(r.rhs), repr(r.constant), r.family, int(r.passed)])


def injectivity_audit(omega: Sequence, sig: Callable[[object, int], Hashable], upsilon: Sequence[int]) -> bool:
    images = [tuple(sig(T, j) for j in upsilon) for T in omega]
    return len(set(images)) == len(images)


def _count_at(x, cubes: Sequence[DyadicCube]) -> int:
    return sum(1 for c in cubes if c.contains_point(x))


def counting_audit(
    omega: Sequence,
    top_of: Callable[[object], DyadicCube],
    sig: Callable[[object, int], Hashable],
    j_tops: Sequence[Sequence[DyadicCube]],
    n: int,
    d: int,
    m: int,
    case: int | None = None,
    families: Sequence[IndexFamily] | None = None,
) -> AuditReport:
    """Compare #Omega^x with products of scalar counting functions at every x-cell.

    Case 1: for every Upsilon of size ceil(m/d) the map sigma_Upsilon must be
    injective on Omega^x, which gives the bound with constant 1. Cases 2 and 3:
    for each family the chain set G is materialized, prod_k sigma_{B^(k)} must be
    injective on it, and #Omega^x <= (1/c_L)^(1/L) (prod_k prod_{B^(k)} N_j)^(1/L)
    (prod_A N_j)^((L-1)/L), with the Katz-Tao count checked on the instance.
    """
    case = theorem_case(n, d, m) if case is None else case
    report = AuditReport(case)
    cubes = [top_of(T) for T in omega] + [c for tops in j_tops for c in tops]
    cells = x_cells(cubes)
    alpha = math.ceil(Fraction(m, d))
    if case != 1 and families is None:
        families = list(enumerate_families(n, d, m))
    for ci, x in enumerate(cells):
        here = [T for T in omega if top_of(T).contains_point(x)]
        N = {j: _count_at(x, j_tops[j - 1]) for j in range(1, n + 1)}
        lhs = len(here)
        if case == 1:
            for ups in combinations(range(1, n + 1), alpha):
                rhs = math.prod(N[j] for j in ups)
                inj = injectivity_audit(here, sig, ups)
                report.rows.append(AuditRow(ci, x, lhs, float(rhs), 1.0, "U=" + ",".join(map(str, ups)), inj))
            continue
        bounds = []
        for fam in families:
            L = fam.L
            cL = katz_tao_constant(L)
            key_A = {id(T): tuple(sig(T, j) for j in fam.A) for T in here}
            fibres: dict = defaultdict(list)
            for T in here:
                fibres[key_A[id(T)]].append(T)
            images = set()
            injective = True
            size_G = 0
            for members in fibres.values():
                for tup in product(members, repeat=L):
                    size_G += 1
                    img = tuple(sig(tup[k], j) for k in range(L) for j in fam.B[k])
                    if img in images:
                        injective = False
                    images.add(img)
            zA = math.prod(N[j] for j in fam.A)
            if lhs:
                kt = katz_tao_chains([id(T) for T in here], [key_A] * (L - 1), [max(zA, 1)] * (L - 1))
                if kt.count != size_G or not kt.holds:
                    injective = False
            prod_B = math.prod(N[j] for k in range(L) for j in fam.B[k])
            const = float(1 / cL) ** (1.0 / L)
            rhs = const * prod_B ** (1.0 / L) * zA ** ((L - 1) / L)
            bounds.append(rhs)
            report.rows.append(AuditRow(ci, x, lhs, rhs, const, json_family(fam), injective))
        if bounds:
            geo = math.exp(sum(math.log(b) if b > 0 else -math.inf for b in bounds) / len(bounds)) if all(b > 0 for b in bounds) else 0.0
            report.geometric.append((ci, lhs, geo))
    return report


def json_family(fam: IndexFamily) -> str:
    return "A=" + ",".join(map(str, fam.A)) + ";" + ";".join("B=" + ",".join(map(str, b)) for b in fam.B)


def audit_ge2(org: Organized, indices: Sequence[ForestIndex], lam: Sequence[float], n: int, d: int, m: int, case: int | None = None, families=None) -> AuditReport:
    """Counting audit for F>=2(lambda) against the scalar forests F_j(lambda_j)."""
    j_tops = [indices[j].tops.get(lam[j], []) for j in range(n)]
    return counting_audit(org.ge2, lambda T: T.I, lambda T, j: sigma(T, j, indices), j_tops, n, d, m, case, families)


def audit_eq1(tiles: Sequence[VectorTile], maximal: Sequence[Sequence[Tile]], n: int, d: int, m: int, case: int | None = None, families=None) -> AuditReport:
    """Counting audit for F=1(lambda, kappa) via sigma' against the maximal-element families."""
    j_tops = [[t.I for t in maximal[j]] for j in range(n)]
    return counting_audit(list(tiles), lambda P: P.I, lambda P, j: sigma_prime(P, j, maximal[j - 1]), j_tops, n, d, m, case, families)
