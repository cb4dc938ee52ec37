"""Trees of tiles for one coordinate family: order relations, mass, greedy selection.

Frequencies are handled exactly. Every endpoint of C2∘Ξ and 10Ξ is ranked per
axis, so a frequency point is a tuple of ranks and membership tests are integer
comparisons. Spatial tops are restricted to the tile intervals together with the
lowest common ancestors of pairs of them; every tree's smallest top lies in that
set, so nothing is lost by the restriction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import DEFAULT, Config
from .errors import (
    InvariantViolation,
    MassPreconditionViolated,
    MassResidueViolation,
    HypothesisViolated,
)
from .geometry import Box, DyadicCube, ShiftedDyadicCube, Tile, VectorTile, centralize, lowest_common_ancestor
from .gridfn import GridFunction, distribution_weak_norm, energy_distribution

PLUS, MINUS = 1, -1


def lacunary_types(d: int) -> list[tuple[int, int]]:
    """(1,+), (1,-), ..., (d,+), (d,-) with 1-based axes."""
    return [(k, s) for k in range(1, d + 1) for s in (PLUS, MINUS)]


class TileOrder:
    """Centralized frequency boxes C2∘Ξ for one family of tiles."""

    def __init__(self, tiles: Iterable[Tile], config: Config = DEFAULT):
        self.config = config
        xis = sorted({t.Xi for t in tiles})
        dilated = {xi: xi.box().dilate(config.C2) for xi in xis}
        G = centralize(list(dilated.values()), config.tree_L, config.centralize_floor) if xis else {}
        self._c2 = {xi: G[dilated[xi]] for xi in xis}
        self._ten = {xi: xi.box().dilate(config.lacunary_dilation) for xi in xis}

    @property
    def frequencies(self) -> list[ShiftedDyadicCube]:
        return sorted(self._c2)

    def c2(self, xi: ShiftedDyadicCube) -> Box:
        try:
            return self._c2[xi]
        except KeyError:
            raise KeyError(f"frequency cube {xi} is not part of this order context") from None

    def ten(self, xi: ShiftedDyadicCube) -> Box:
        if xi not in self._ten:
            return xi.box().dilate(self.config.lacunary_dilation)
        return self._ten[xi]


# -- order relations ---------------------------------------------------------


def tile_le(a: Tile, b: Tile) -> bool:
    return b.I.contains(a.I) and a.Xi.box().contains(b.Xi.box())


def tile_lesssim(a: Tile, b: Tile, ctx: TileOrder) -> bool:
    return b.I.contains(a.I) and ctx.c2(a.Xi).contains(ctx.c2(b.Xi))


def tile_le_top(a: Tile, I: DyadicCube, xi: Sequence) -> bool:
    return I.contains(a.I) and a.Xi.box().contains_point(xi)


def tile_lesssim_top(a: Tile, I: DyadicCube, xi: Sequence, ctx: TileOrder) -> bool:
    return I.contains(a.I) and ctx.c2(a.Xi).contains_point(xi)


def in_lacunary_region(a: Tile, xi: Sequence, ctx: TileOrder, kind: tuple[int, int] | None = None) -> bool:
    """xi in C2∘Ξ minus 10Ξ; with kind = (k, sign) the axis-k clause is one-sided."""
    if not ctx.c2(a.Xi).contains_point(xi):
        return False
    ten = ctx.ten(a.Xi)
    if kind is None:
        return not ten.contains_point(xi)
    k, sign = kind
    x = xi[k - 1]
    return x < ten.lo[k - 1] if sign == PLUS else x >= ten.hi[k - 1]


# -- trees and forests -------------------------------------------------------


@dataclass
class Tree:
    j: int
    tiles: tuple[Tile, ...]
    top: DyadicCube
    xi: tuple[Fraction, ...]
    lacunary: tuple[int, int] | None = None

    def __len__(self):
        return len(self.tiles)

    def validate(self, ctx: TileOrder, lacunary: bool | None = None) -> None:
        if not self.tiles:
            raise InvariantViolation("empty tree")
        top = _lca_of(t.I for t in self.tiles)
        if top != self.top:
            raise InvariantViolation(f"top {self.top} is not the smallest dyadic cube, expected {top}")
        for t in self.tiles:
            if not tile_lesssim_top(t, self.top, self.xi, ctx):
                raise InvariantViolation(f"tile {t} is not dominated by the top")
            if lacunary or (lacunary is None and self.lacunary is not None):
                if not in_lacunary_region(t, self.xi, ctx, self.lacunary):
                    raise InvariantViolation(f"tile {t} breaks the lacunary condition")

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "top": self.top.to_json(),
            "xi": [str(x) for x in self.xi],
            "lacunary": None if self.lacunary is None else {"axis": self.lacunary[0], "sign": "+" if self.lacunary[1] > 0 else "-"},
            "tiles": [{"I": t.I.to_json(), "Xi": t.Xi.to_json()} for t in self.tiles],
        }


@dataclass
class SelectedTree:
    tree: Tree
    companion: tuple[Tile, ...]

    def merged(self) -> Tree:
        tiles = tuple(sorted(self.tree.tiles + self.companion))
        return Tree(self.tree.j, tiles, self.tree.top, self.tree.xi, None)


@dataclass
class Forest:
    trees: list[Tree]
    level: float
    j: int = 1
    strongly_disjoint: bool | None = None

    @property
    def tiles(self) -> list[Tile]:
        return [t for T in self.trees for t in T.tiles]

    def to_json(self) -> dict:
        return {"j": self.j, "lambda": self.level, "strongly_disjoint": self.strongly_disjoint, "trees": [T.to_json() for T in self.trees]}


def _lca_of(cubes: Iterable[DyadicCube]) -> DyadicCube | None:
    it = iter(cubes)
    top = next(it)
    for c in it:
        top = lowest_common_ancestor(top, c)
        if top is None:
            return None
    return top


def _coefficient_array(tiles: Sequence[Tile], coefficients) -> np.ndarray:
    if isinstance(coefficients, Mapping):
        return np.array([complex(coefficients.get(t, 0.0)) for t in tiles], dtype=complex)
    arr = np.asarray(coefficients, dtype=complex).ravel()
    if len(arr) != len(tiles):
        raise ValueError("coefficient array does not match the tiles")
    return arr


def tile_energies(coefficients: np.ndarray) -> np.ndarray:
    return np.abs(coefficients) ** 2


def weak_l1_of(tiles: Sequence[Tile], energies: Sequence[float]) -> float:
    """||(sum |a|^2/|I| 1_I)^(1/2)||_{1,inf} from per-tile energies |a|^2."""
    w: dict[DyadicCube, float] = {}
    for t, e in zip(tiles, energies):
        if e > 0:
            w[t.I] = w.get(t.I, 0.0) + e / float(t.I.volume)
    vals, meas = energy_distribution(w)
    return distribution_weak_norm(vals, meas, 1.0)


# -- the arrangement ---------------------------------------------------------


class TileArrangement:
    """Rank-compressed frequency arrangement and candidate tops for a tile list."""

    def __init__(self, tiles: Sequence[Tile], coefficients, ctx: TileOrder, j: int = 1):
        self.tiles = list(dict.fromkeys(tiles))
        if len(self.tiles) != len(tiles):
            raise ValueError("duplicate tiles")
        self.ctx = ctx
        self.j = j
        self.coefficients = _coefficient_array(self.tiles, coefficients)
        self.energy = tile_energies(self.coefficients)
        self.index = {t: i for i, t in enumerate(self.tiles)}
        n = len(self.tiles)
        self.d = self.tiles[0].I.dim if n else 0
        d = self.d
        c2 = [ctx.c2(t.Xi) for t in self.tiles]
        ten = [ctx.ten(t.Xi) for t in self.tiles]
        self.breakpoints: list[list[Fraction]] = []
        self.c2lo = np.zeros((n, d), dtype=np.int64)
        self.c2hi = np.zeros((n, d), dtype=np.int64)
        self.tlo = np.zeros((n, d), dtype=np.int64)
        self.thi = np.zeros((n, d), dtype=np.int64)
        for k in range(d):
            pts = sorted({b.lo[k] for b in c2} | {b.hi[k] for b in c2} | {b.lo[k] for b in ten} | {b.hi[k] for b in ten})
            rank = {p: r for r, p in enumerate(pts)}
            self.breakpoints.append(pts)
            for i in range(n):
                self.c2lo[i, k] = rank[c2[i].lo[k]]
                self.c2hi[i, k] = rank[c2[i].hi[k]]
                self.tlo[i, k] = rank[ten[i].lo[k]]
                self.thi[i, k] = rank[ten[i].hi[k]]
        self._build_tops()
        self._typed: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
        self._general: tuple[np.ndarray, np.ndarray] | None = None
        self._weak_cache: dict[frozenset, float] = {}

    # spatial side

    def _build_tops(self) -> None:
        intervals = sorted({t.I for t in self.tiles})
        tops = set(intervals)
        for a, b in combinations(intervals, 2):
            c = lowest_common_ancestor(a, b)
            if c is not None:
                tops.add(c)
        self.tops = sorted(tops, key=lambda I: (I.level, I.corner))
        self.top_index = {I: r for r, I in enumerate(self.tops)}
        self.top_volume = np.array([float(I.volume) for I in self.tops])
        contain = np.zeros((len(self.tops), len(self.tiles)), dtype=bool)
        max_level = self.tops[-1].level if self.tops else 0
        for i, t in enumerate(self.tiles):
            cur = t.I
            while cur.level <= max_level:
                r = self.top_index.get(cur)
                if r is not None:
                    contain[r, i] = True
                cur = cur.parent()
        self.contain = contain

    def point(self, ranks: Sequence[int]) -> tuple[Fraction, ...]:
        return tuple(self.breakpoints[k][int(r)] for k, r in enumerate(ranks))

    def ranks_of(self, xi: Sequence) -> tuple[int, ...]:
        """Rank of the arrangement cell holding xi (raises if xi is outside every box)."""
        out = []
        for k, x in enumerate(xi):
            pts = self.breakpoints[k]
            r = int(np.searchsorted(np.array([float(p) for p in pts]), float(x), side="right")) - 1
            while r + 1 < len(pts) and pts[r + 1] <= x:
                r += 1
            while r >= 0 and pts[r] > x:
                r -= 1
            out.append(r)
        return tuple(out)

    # frequency side

    def _allowed(self, kind: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        k, sign = kind
        lo = self.c2lo.copy()
        hi = self.c2hi.copy()
        if sign == PLUS:
            hi[:, k - 1] = np.minimum(hi[:, k - 1], self.tlo[:, k - 1])
        else:
            lo[:, k - 1] = np.maximum(lo[:, k - 1], self.thi[:, k - 1])
        return lo, hi

    def typed_cells(self, kind: tuple[int, int]):
        """Cells for a one-sided lacunary type: products of lower endpoints.

        Moving a point down to the largest lower endpoint below it on every axis
        keeps every box that contained it, so these cells see every maximal set.
        Returns (cell ranks, membership mask, lo, hi).
        """
        if kind not in self._typed:
            lo, hi = self._allowed(kind)
            axes = [np.unique(lo[:, k]) for k in range(self.d)]
            masks = [(lo[None, :, k] <= axes[k][:, None]) & (axes[k][:, None] < hi[None, :, k]) for k in range(self.d)]
            cells, mask = _product_cells(axes, masks)
            self._typed[kind] = (cells, mask, lo, hi)
        return self._typed[kind]

    def general_cells(self):
        """All cells of the arrangement with membership in C2∘Ξ minus 10Ξ."""
        if self._general is None:
            axes, in_c2, in_ten = [], [], []
            for k in range(self.d):
                r = np.arange(len(self.breakpoints[k]) - 1)
                axes.append(r)
                in_c2.append((self.c2lo[None, :, k] <= r[:, None]) & (r[:, None] < self.c2hi[None, :, k]))
                in_ten.append((self.tlo[None, :, k] <= r[:, None]) & (r[:, None] < self.thi[None, :, k]))
            cells, a = _product_cells(axes, in_c2)
            _, b = _product_cells(axes, in_ten)
            self._general = (cells, a & ~b)
        return self._general

    # evaluation

    def energy_table(self, mask: np.ndarray, active: np.ndarray) -> np.ndarray:
        w = self.contain * (self.energy * active)[None, :]
        return (mask & active[None, :]).astype(float) @ w.T

    def members(self, mask_row: np.ndarray, top: int, active: np.ndarray) -> np.ndarray:
        return np.nonzero(mask_row & self.contain[top] & active)[0]

    def weak_l1(self, idx: np.ndarray) -> float:
        key = frozenset(int(i) for i in idx)
        if key not in self._weak_cache:
            self._weak_cache[key] = weak_l1_of([self.tiles[i] for i in idx], [self.energy[i] for i in idx])
        return self._weak_cache[key]

    def tree_top(self, idx: Sequence[int]) -> DyadicCube:
        return _lca_of(self.tiles[i].I for i in idx)

    def mass_witness(self, active: np.ndarray | None = None):
        """(mass, member indices, top, xi) for the heaviest lacunary tree among active tiles."""
        n = len(self.tiles)
        if active is None:
            active = np.ones(n, dtype=bool)
        if n == 0 or not np.any(self.energy[active] > 0):
            return 0.0, np.zeros(0, dtype=int), None, None
        cells, mask = self.general_cells()
        E = self.energy_table(mask, active)
        ratio = E / self.top_volume[None, :]
        best = ratio.max()
        near = np.argwhere(ratio >= best * (1 - 1e-9))
        result = (0.0, None, None, None)
        seen = set()
        for c, r in near:
            idx = self.members(mask[c], r, active)
            key = frozenset(int(i) for i in idx)
            if not len(idx) or key in seen:
                continue
            seen.add(key)
            top = self.tree_top(idx)
            val = math.fsum(float(self.energy[i]) for i in idx) / float(top.volume)
            if val > result[0]:
                result = (val, idx, top, self.point(cells[c]))
        return math.sqrt(result[0]), result[1], result[2], result[3]

    def mass(self, active: np.ndarray | None = None) -> float:
        return self.mass_witness(active)[0]

    def candidate_tops(self) -> list[tuple[DyadicCube, tuple[Fraction, ...], int, int]]:
        out = []
        active = np.ones(len(self.tiles), dtype=bool)
        for kind in lacunary_types(self.d):
            cells, mask, _, _ = self.typed_cells(kind)
            hits = (mask.astype(np.int64) @ self.contain.T.astype(np.int64)) > 0
            for c, r in np.argwhere(hits):
                out.append((self.tops[r], self.point(cells[c]), kind[0], kind[1]))
        return out

    def select(self, lam: float, kind: tuple[int, int], c_d: float, active: np.ndarray) -> list[tuple[np.ndarray, DyadicCube, tuple[int, ...], np.ndarray]]:
        """Greedy extremal selection for one lacunary type; mutates ``active``."""
        k0 = kind[0] - 1
        sign = kind[1]
        cells, mask, lo, hi = self.typed_cells(kind)
        threshold = c_d * lam
        out = []
        while True:
            E = self.energy_table(mask, active)
            ratio = E / self.top_volume[None, :]
            cand = np.argwhere(ratio > threshold**2 * (1 - 1e-9))
            if not len(cand):
                break
            options = {}
            for c, r in cand:
                idx = self.members(mask[c], r, active)
                if not len(idx):
                    continue
                key = frozenset(int(i) for i in idx)
                if key in options:
                    continue
                corner = tuple(int(v) for v in lo[idx].max(axis=0))
                top = self.tree_top(idx)
                order = (-sign * corner[k0], top.level, top.corner, corner)
                options[key] = (order, idx, top, corner)
            chosen = None
            for order, idx, top, corner in sorted(options.values(), key=lambda o: o[0]):
                if self.weak_l1(idx) / float(top.volume) > threshold:
                    chosen = (idx, top, corner)
                    break
            if chosen is None:
                break
            idx, top, corner = chosen
            member = np.zeros(len(self.tiles), dtype=bool)
            member[idx] = True
            inside = self.contain[self.top_index[top]]
            cr = np.array(corner)
            dominated = np.all((self.c2lo <= cr[None, :]) & (cr[None, :] < self.c2hi), axis=1)
            companion = np.nonzero(active & ~member & inside & dominated)[0]
            active[idx] = False
            active[companion] = False
            out.append((idx, top, corner, companion))
        return out


def _product_cells(axes: list[np.ndarray], masks: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    cells = np.array(list(product(*axes)), dtype=np.int64).reshape(-1, len(axes))
    mask = masks[0]
    for m in masks[1:]:
        mask = (mask[:, None, :] & m[None, :, :]).reshape(-1, m.shape[1])
    return cells, mask


# -- public operations -------------------------------------------------------


def candidate_tops(tiles: Sequence[Tile], ctx: TileOrder) -> list[tuple[DyadicCube, tuple[Fraction, ...], int, int]]:
    """(I, xi, k, sign) pairs spanning the finite search space for typed lacunary trees."""
    if not tiles:
        return []
    return TileArrangement(tiles, np.zeros(len(tiles)), ctx).candidate_tops()


def mass(tiles: Sequence[Tile], coefficients, ctx: TileOrder) -> float:
    """sup over lacunary trees T in the collection of (sum_T |a|^2 / |I_T|)^(1/2)."""
    if not len(tiles):
        return 0.0
    return TileArrangement(tiles, coefficients, ctx).mass()


def _tree_from(arr: TileArrangement, idx, top, corner, kind) -> Tree:
    return Tree(arr.j, tuple(sorted(arr.tiles[i] for i in idx)), top, arr.point(corner), kind)


@dataclass
class SelectionResult:
    selected: list[SelectedTree]
    residual: list[Tile]
    kind: tuple[int, int]

    @property
    def trees(self) -> list[Tree]:
        return [s.tree for s in self.selected]


def select_trees(tiles: Sequence[Tile], coefficients, lam: float, k: int, sign: int, ctx: TileOrder, c_d: float | None = None, j: int = 1, check: bool = True) -> SelectionResult:
    """Repeatedly remove the (k, sign)-lacunary tree with extremal top frequency whose
    normalized weak-L1 square function exceeds c_d * lam, together with every
    remaining tile it dominates."""
    c_d = ctx.config.c_d if c_d is None else c_d
    if not len(tiles):
        return SelectionResult([], [], (k, sign))
    arr = TileArrangement(tiles, coefficients, ctx, j)
    active = np.ones(len(arr.tiles), dtype=bool)
    if check:
        _check_precondition(arr, active, lam)
    picked = arr.select(lam, (k, sign), c_d, active)
    selected = [SelectedTree(_tree_from(arr, idx, top, corner, (k, sign)), tuple(sorted(arr.tiles[i] for i in comp))) for idx, top, corner, comp in picked]
    residual = [t for t, a in zip(arr.tiles, active) if a]
    return SelectionResult(selected, residual, (k, sign))


def _check_precondition(arr: TileArrangement, active: np.ndarray, lam: float) -> None:
    m = arr.mass(active)
    if m > lam * (1 + 1e-12):
        raise MassPreconditionViolated(f"mass {m:.6g} exceeds lambda {lam:.6g}")


@dataclass
class PartitionResult:
    level: float
    selections: list[SelectionResult]
    forest: Forest
    residual: list[Tile]
    residual_mass: float

    @property
    def removed(self) -> list[Tile]:
        return self.forest.tiles


def _partition(arr: TileArrangement, active: np.ndarray, lam: float, c_d: float, check: bool) -> PartitionResult:
    if check:
        _check_precondition(arr, active, lam)
    selections = []
    for kind in lacunary_types(arr.d):
        picked = arr.select(lam, kind, c_d, active)
        sel = [SelectedTree(_tree_from(arr, idx, top, corner, kind), tuple(sorted(arr.tiles[i] for i in comp))) for idx, top, corner, comp in picked]
        selections.append(SelectionResult(sel, [], kind))
    residual = [t for t, a in zip(arr.tiles, active) if a]
    for s in selections:
        s.residual = residual
    rest = arr.mass(active)
    if rest > lam / 2 * (1 + 1e-12):
        raise MassResidueViolation(f"residual mass {rest:.6g} exceeds lambda/2 = {lam / 2:.6g}")
    trees = [s.merged() for sel in selections for s in sel.selected]
    forest = Forest(trees, lam, arr.j, all(strongly_disjoint_check(s.trees) for s in selections))
    return PartitionResult(lam, selections, forest, residual, rest)


def mass_partition(tiles: Sequence[Tile], coefficients, lam: float, ctx: TileOrder, c_d: float | None = None, j: int = 1) -> PartitionResult:
    """Run every lacunary type once; the removed tiles form j-trees, the rest has mass at most lam/2."""
    c_d = ctx.config.c_d if c_d is None else c_d
    if not len(tiles):
        return PartitionResult(lam, [], Forest([], lam, j, True), [], 0.0)
    arr = TileArrangement(tiles, coefficients, ctx, j)
    return _partition(arr, np.ones(len(arr.tiles), dtype=bool), lam, c_d, True)


@dataclass
class Decomposition:
    levels: dict[float, PartitionResult]
    zero_trees: list[Tree]
    initial_mass: float
    j: int = 1

    def tiles_at(self, lam: float) -> list[Tile]:
        return self.levels[lam].removed

    def all_tiles(self) -> list[Tile]:
        out = [t for p in self.levels.values() for t in p.removed]
        out += [t for T in self.zero_trees for t in T.tiles]
        return out

    def forests(self) -> dict[float, Forest]:
        return {lam: p.forest for lam, p in self.levels.items()}

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "initial_mass": self.initial_mass,
            "levels": [p.forest.to_json() for p in self.levels.values()],
            "zero_trees": [T.to_json() for T in self.zero_trees],
        }


def forest_decompose(tiles: Sequence[Tile], coefficients, ctx: TileOrder, c_d: float | None = None, j: int = 1, max_levels: int = 200) -> Decomposition:
    """Partition a tile family into forests at dyadic mass levels lam = 2^k, decreasing."""
    c_d = ctx.config.c_d if c_d is None else c_d
    if not len(tiles):
        return Decomposition({}, [], 0.0, j)
    arr = TileArrangement(tiles, coefficients, ctx, j)
    active = np.ones(len(arr.tiles), dtype=bool)
    m0 = arr.mass(active)
    levels: dict[float, PartitionResult] = {}
    if m0 > 0:
        lam = 2.0 ** math.ceil(math.log2(m0))
        if lam < m0:
            lam *= 2
        for _ in range(max_levels):
            if not np.any(arr.energy[active] > 0):
                break
            levels[lam] = _partition(arr, active, lam, c_d, False)
            lam /= 2
        else:
            raise InvariantViolation("forest decomposition did not terminate")
    zero = []
    for i in np.nonzero(active)[0]:
        t = arr.tiles[i]
        zero.append(Tree(j, (t,), t.I, t.Xi.center, None))
    return Decomposition(levels, zero, m0, j)


# -- checks and measurements -------------------------------------------------


def strong_disjointness_violations(trees: Sequence[Tree]) -> list[tuple[int, Tile, int, Tile]]:
    """All (T, R, T', R') with s(Ξ(R)) < s(Ξ(R')), Ξ(R) meeting Ξ(R') and I(R') meeting I_T."""
    out = []
    meets: dict[tuple, bool] = {}
    for a, A in enumerate(trees):
        for b, B in enumerate(trees):
            if a == b:
                continue
            for R in A.tiles:
                for Rp in B.tiles:
                    if not R.Xi.level < Rp.Xi.level:
                        continue
                    key = (R.Xi, Rp.Xi)
                    if key not in meets:
                        meets[key] = R.Xi.box().intersects(Rp.Xi.box())
                    if meets[key] and (A.top.contains(Rp.I) or Rp.I.contains(A.top)):
                        out.append((a, R, b, Rp))
    return out


def strongly_disjoint_check(trees: Sequence[Tree]) -> bool:
    seen = set()
    for T in trees:
        for t in T.tiles:
            if t in seen:
                return False
            seen.add(t)
    return not strong_disjointness_violations(trees)


def counting_function(trees: Sequence[Tree], domain: Box, N: int) -> GridFunction:
    g = GridFunction(domain, N)
    vals = np.zeros((N,) * domain.dim)
    mesh = g.mesh()
    for T in trees:
        b = T.top.box()
        m = np.ones_like(vals, dtype=bool)
        for k in range(domain.dim):
            m &= (mesh[k] >= float(b.lo[k])) & (mesh[k] < float(b.hi[k]))
        vals[m] += 1
    return g.with_values(vals)


def counting_distribution(trees: Sequence[Tree]) -> tuple[np.ndarray, np.ndarray]:
    """Exact (values, measures) of N_F = sum of indicators of the tree tops."""
    w: dict[DyadicCube, float] = {}
    for T in trees:
        w[T.top] = w.get(T.top, 0.0) + 1.0
    vals, meas = energy_distribution(w)
    return np.rint(vals**2), meas


def counting_norm(trees: Sequence[Tree], p: float) -> float:
    vals, meas = counting_distribution(trees)
    if not len(vals):
        return 0.0
    if p == np.inf:
        return float(vals.max())
    return float(np.sum(vals**p * meas) ** (1.0 / p))


def regularity_ratio(trees: Sequence[Tree], coefficients: Mapping[Tile, complex]) -> float:
    """sup_R |a_R| / |I(R)|^(1/2) over inf_T (sum_T |a|^2 / |I_T|)^(1/2)."""
    if not trees:
        return 0.0
    sup = max(abs(coefficients.get(t, 0)) / float(t.I.volume) ** 0.5 for T in trees for t in T.tiles)
    inf = min(math.sqrt(math.fsum(abs(coefficients.get(t, 0)) ** 2 for t in T.tiles) / float(T.top.volume)) for T in trees)
    return sup / inf if inf > 0 else math.inf


def bessel_ratio(trees: Sequence[Tree], coefficients: Mapping[Tile, complex], f_norm_sq: float, regularity: float | None = None) -> float:
    """sum over the forest of |<f, phi_R>|^2 divided by ||f||_2^2."""
    if regularity is not None:
        r = regularity_ratio(trees, coefficients)
        if r > regularity:
            raise HypothesisViolated(f"regularity ratio {r:.4g} exceeds {regularity:.4g}")
    if f_norm_sq <= 0:
        raise ValueError("f must be nonzero")
    total = math.fsum(abs(coefficients.get(t, 0)) ** 2 for T in trees for t in T.tiles)
    return total / f_norm_sq


def tree_sum(vtiles: Sequence[VectorTile], coefficients: Sequence[Mapping[Tile, complex]]) -> float:
    """sum over the vector tree of |I|^(1 - n/2) prod_j |<f_j, phi_{R_j}>|."""
    total = []
    for R in vtiles:
        n = R.n
        term = float(R.I.volume) ** (1 - n / 2)
        for j in range(n):
            term *= abs(coefficients[j].get(R.component(j), 0))
        total.append(term)
    return math.fsum(total)


def packet_coefficients(tiles: Sequence[Tile], sources: Sequence[Tile], weights: Sequence[complex], profile) -> tuple[dict[Tile, complex], float]:
    """Coefficients <f | phi_R> and ||f||_2^2 for f = sum_s w_s phi_s, all on the frequency side."""
    from .wavepackets import packet_gram

    w = np.asarray(weights, dtype=complex)
    G = packet_gram(tiles, sources, profile)
    coeffs = np.conj(G) @ w
    S = packet_gram(sources, sources, profile)
    norm_sq = float(np.real(np.conj(w) @ (S.T @ w)))
    return dict(zip(tiles, coeffs)), norm_sq


# -- exhaustive oracle -------------------------------------------------------


def _region_pieces(t: Tile, ctx: TileOrder) -> list[Box]:
    c2, ten = ctx.c2(t.Xi), ctx.ten(t.Xi)
    out = []
    for k in range(c2.dim):
        lo, hi = list(c2.lo), list(c2.hi)
        hi[k] = min(hi[k], ten.lo[k])
        if lo[k] < hi[k]:
            out.append(Box(tuple(lo), tuple(hi)))
        lo, hi = list(c2.lo), list(c2.hi)
        lo[k] = max(lo[k], ten.hi[k])
        if lo[k] < hi[k]:
            out.append(Box(tuple(lo), tuple(hi)))
    return out


def _boxes_meet(boxes: Sequence[Box]) -> bool:
    d = boxes[0].dim
    return all(max(b.lo[k] for b in boxes) < min(b.hi[k] for b in boxes) for k in range(d))


def is_lacunary_set(tiles: Sequence[Tile], ctx: TileOrder) -> bool:
    pieces = [_region_pieces(t, ctx) for t in tiles]
    return any(_boxes_meet(choice) for choice in product(*pieces))


def exhaustive_mass(tiles: Sequence[Tile], coefficients, ctx: TileOrder, limit: int = 12) -> float:
    """Mass by enumerating every subset; independent of the arrangement machinery."""
    tiles = list(tiles)
    if len(tiles) > limit:
        raise ValueError(f"exhaustive mass is limited to {limit} tiles")
    energy = tile_energies(_coefficient_array(tiles, coefficients))
    best = 0.0
    for size in range(1, len(tiles) + 1):
        for sub in combinations(range(len(tiles)), size):
            top = _lca_of(tiles[i].I for i in sub)
            if top is None:
                continue
            e = math.fsum(float(energy[i]) for i in sub)
            if e == 0 or e / float(top.volume) <= best:
                continue
            if is_lacunary_set([tiles[i] for i in sub], ctx):
                best = e / float(top.volume)
    return math.sqrt(best)


# -- random sparse collections -----------------------------------------------


def sparse_level_gap(config: Config = DEFAULT) -> int:
    """Smallest K with 2^K > C3."""
    K = 1
    while 2**K <= config.C3:
        K += 1
    return K


@dataclass
class RandomCollection:
    tiles: list[Tile]
    coefficients: dict[Tile, complex]
    gap: int
    seed: int | None = None
    meta: dict = field(default_factory=dict)


def random_tile_collection(rng: np.random.Generator, size: int = 60, d: int = 1, config: Config = DEFAULT, depth: int = 3) -> RandomCollection:
    """Tiles whose frequency cubes form a C3-sparse grid on levels 0, K, 2K, ...

    Smaller frequency cubes sit in the annulus between 10Ξ and C2Ξ of a larger
    one, so lacunary trees across scales exist. Spatial intervals nest along
    the same hierarchy, and coefficients are |I|^(1/2) times a log-normal
    complex factor.
    """
    K = sparse_level_gap(config)
    C3 = int(config.C3)
    levels = [K * (depth - 1 - i) for i in range(depth)]
    freq_by_level: dict[int, list[ShiftedDyadicCube]] = {L: [] for L in levels}
    n_roots = int(rng.integers(1, 3))
    root_level = levels[0]
    for r in range(n_roots):
        corner = tuple(int(r * 4 * C3 + (k * 7 * C3 if k else 0)) for k in range(d))
        freq_by_level[root_level].append(ShiftedDyadicCube(root_level, corner))
    fan = max(2, int(round(size ** (1 / depth))))
    for parent_level, level in zip(levels, levels[1:]):
        ratio = 2 ** (parent_level - level)
        spacing = C3 + 4
        for P in freq_by_level[parent_level]:
            placed = []
            for _ in range(fan * 3):
                if len(placed) >= fan:
                    break
                off = []
                for k in range(d):
                    off.append(rng.uniform(-15.0, 15.0))
                if max(abs(o) for o in off) < 5.5:
                    kk = int(rng.integers(0, d))
                    off[kk] = float(rng.choice([-1, 1]) * rng.uniform(5.5, 15.0))
                corner = tuple(int((P.corner[k] + 0.5 + off[k]) * ratio) for k in range(d))
                if any(max(abs(a - b) for a, b in zip(corner, q)) <= spacing for q in placed + [x.corner for x in freq_by_level[level]]):
                    continue
                placed.append(corner)
            freq_by_level[level] += [ShiftedDyadicCube(level, c) for c in placed]
    all_xi = [x for L in levels for x in freq_by_level[L]]
    roots = [DyadicCube(0, tuple(int(rng.integers(0, 2)) for _ in range(d))) for _ in range(2)]
    tiles: dict[Tile, None] = {}
    by_level_I: dict[int, list[DyadicCube]] = {}
    order = sorted(all_xi, key=lambda x: x.level)
    attempts = 0
    while len(tiles) < size and attempts < 20 * size:
        xi = order[attempts % len(order)] if attempts < len(order) else order[int(rng.integers(0, len(order)))]
        attempts += 1
        ilevel = -xi.level
        coarser = [I for lv, Is in by_level_I.items() if lv > ilevel for I in Is]
        base = coarser[int(rng.integers(0, len(coarser)))] if coarser and rng.random() < 0.8 else roots[int(rng.integers(0, len(roots)))]
        span = base.level - ilevel
        corner = tuple((c << span) + int(rng.integers(0, 2**span)) for c in base.corner)
        t = Tile(DyadicCube(ilevel, corner), xi)
        if t not in tiles:
            tiles[t] = None
            by_level_I.setdefault(ilevel, []).append(t.I)
    tile_list = sorted(tiles)
    coeffs = {}
    for t in tile_list:
        mag = float(t.I.volume) ** 0.5 * float(np.exp(rng.normal(0, 1.0)))
        coeffs[t] = mag * complex(np.exp(2j * np.pi * rng.random()))
    return RandomCollection(tile_list, coeffs, K, meta={"levels": levels, "n_frequencies": len(all_xi)})
