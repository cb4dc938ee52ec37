"""Dyadic and shifted dyadic cubes, grids, sparseness, centralization and Whitney cubes.

All distances use the sup metric. Coordinates are exact rationals.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import floor
from typing import Iterable, Sequence

import numpy as np

from .config import exact_sqrt
from .errors import DegenerateProjection, InvariantViolation, NotSparse
from .linalg import nullspace, rank, to_fraction


def _pow2(level: int) -> Fraction:
    return Fraction(2) ** level


@dataclass(frozen=True)
class Box:
    """Product of half-open intervals [lo_k, hi_k)."""

    lo: tuple[Fraction, ...]
    hi: tuple[Fraction, ...]

    def __post_init__(self):
        lo = tuple(to_fraction(x) for x in self.lo)
        hi = tuple(to_fraction(x) for x in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lo and hi must be nonempty and of equal length")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("box sides must be positive")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, center: Sequence, side) -> "Box":
        side = to_fraction(side)
        c = [to_fraction(x) for x in center]
        return cls(tuple(x - side / 2 for x in c), tuple(x + side / 2 for x in c))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def sides(self) -> tuple[Fraction, ...]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    @property
    def is_cube(self) -> bool:
        return len(set(self.sides)) == 1

    @property
    def side(self) -> Fraction:
        """Side length s(Q); the largest side for non-cubes."""
        return max(self.sides)

    @property
    def center(self) -> tuple[Fraction, ...]:
        return tuple((l + h) / 2 for l, h in zip(self.lo, self.hi))

    @property
    def volume(self) -> Fraction:
        v = Fraction(1)
        for s in self.sides:
            v *= s
        return v

    def box(self) -> "Box":
        return self

    def dilate(self, factor) -> "Box":
        """factor * Q: same center, sides scaled."""
        factor = to_fraction(factor)
        c = self.center
        half = [s * factor / 2 for s in self.sides]
        return Box(tuple(x - h for x, h in zip(c, half)), tuple(x + h for x, h in zip(c, half)))

    def contains(self, other) -> bool:
        o = as_box(other)
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, o.lo, o.hi))

    def contains_point(self, x: Sequence) -> bool:
        return all(l <= to_fraction(v) < h for l, h, v in zip(self.lo, self.hi, x))

    def intersects(self, other) -> bool:
        o = as_box(other)
        return all(a < d and c < b for a, b, c, d in zip(self.lo, self.hi, o.lo, o.hi))

    def __repr__(self) -> str:
        parts = ", ".join(f"[{l}, {h})" for l, h in zip(self.lo, self.hi))
        return f"Box({parts})"


def as_box(x) -> Box:
    return x if isinstance(x, Box) else x.box()


@dataclass(frozen=True, order=True)
class DyadicCube:
    """2^level ([0,1)^d + corner)."""

    level: int
    corner: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "corner", tuple(int(c) for c in self.corner))
        object.__setattr__(self, "level", int(self.level))

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def side(self) -> Fraction:
        return _pow2(self.level)

    @property
    def volume(self) -> Fraction:
        return self.side ** self.dim

    @property
    def center(self) -> tuple[Fraction, ...]:
        s = self.side
        return tuple((c + Fraction(1, 2)) * s for c in self.corner)

    def box(self) -> Box:
        s = self.side
        return Box(tuple(c * s for c in self.corner), tuple((c + 1) * s for c in self.corner))

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level + 1, tuple(c >> 1 for c in self.corner))

    def ancestor(self, level: int) -> "DyadicCube":
        if level < self.level:
            raise ValueError("ancestor level below cube level")
        k = level - self.level
        return DyadicCube(level, tuple(c >> k for c in self.corner))

    def children(self) -> list["DyadicCube"]:
        out = []
        for bits in range(2 ** self.dim):
            out.append(DyadicCube(self.level - 1, tuple(2 * c + ((bits >> k) & 1) for k, c in enumerate(self.corner))))
        return out

    def contains(self, other: "DyadicCube") -> bool:
        if other.level > self.level:
            return False
        return other.ancestor(self.level) == self

    def contains_point(self, x: Sequence) -> bool:
        return self.box().contains_point(x)

    def to_json(self) -> dict:
        return {"level": self.level, "corner": list(self.corner)}


def lowest_common_ancestor(a: DyadicCube, b: DyadicCube) -> DyadicCube | None:
    """Smallest dyadic cube containing both, or None when they sit in different orthants."""
    level = max(a.level, b.level)
    x, y = a.ancestor(level).corner, b.ancestor(level).corner
    up = 0
    for u, v in zip(x, y):
        if (u < 0) != (v < 0):
            return None
        up = max(up, (u ^ v).bit_length())
    return DyadicCube(level + up, tuple(u >> up for u in x))


@dataclass(frozen=True, order=True)
class ShiftedDyadicCube:
    """2^level ([0,1)^d + corner + shift/3), shift entries in {0, 1, 2}."""

    level: int
    corner: tuple[int, ...]
    shift: tuple[int, ...] = ()

    def __post_init__(self):
        corner = tuple(int(c) for c in self.corner)
        shift = tuple(int(s) for s in self.shift) if self.shift else (0,) * len(corner)
        if len(shift) != len(corner) or any(s not in (0, 1, 2) for s in shift):
            raise ValueError("shift entries must be 0, 1 or 2 (thirds)")
        object.__setattr__(self, "corner", corner)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "level", int(self.level))

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def side(self) -> Fraction:
        return _pow2(self.level)

    @property
    def lo(self) -> tuple[Fraction, ...]:
        s = self.side
        return tuple((c + Fraction(a, 3)) * s for c, a in zip(self.corner, self.shift))

    @property
    def center(self) -> tuple[Fraction, ...]:
        s = self.side
        return tuple(x + s / 2 for x in self.lo)

    def box(self) -> Box:
        s = self.side
        lo = self.lo
        return Box(lo, tuple(x + s for x in lo))

    def grid_key(self) -> tuple[int, ...]:
        """Which of the 3^d grid families the cube belongs to."""
        odd = self.level % 2
        out = []
        for a in self.shift:
            if a == 0:
                out.append(0)
            elif (odd and a == 1) or (not odd and a == 2):
                out.append(1)
            else:
                out.append(2)
        return tuple(out)

    def parent(self) -> "ShiftedDyadicCube":
        """The unique cube one level up in the same grid family."""
        key = self.grid_key()
        level = self.level + 1
        odd = level % 2
        shift = []
        for g in key:
            if g == 0:
                shift.append(0)
            elif g == 1:
                shift.append(1 if odd else 2)
            else:
                shift.append(2 if odd else 1)
        s = _pow2(level)
        corner = tuple(floor(x / s - Fraction(a, 3)) for x, a in zip(self.lo, shift))
        p = ShiftedDyadicCube(level, corner, tuple(shift))
        if not p.box().contains(self.box()):
            raise InvariantViolation("parent does not contain child")
        return p

    def to_json(self) -> dict:
        return {"level": self.level, "corner": list(self.corner), "shift": [f"{a}/3" for a in self.shift]}

    @classmethod
    def from_json(cls, data: dict) -> "ShiftedDyadicCube":
        shift = [int(Fraction(s) * 3) for s in data.get("shift", [0] * len(data["corner"]))]
        return cls(data["level"], tuple(data["corner"]), tuple(shift))


@dataclass(frozen=True, order=True)
class Tile:
    """I x Xi with s(I) s(Xi) = 1."""

    I: DyadicCube
    Xi: ShiftedDyadicCube

    def __post_init__(self):
        if self.I.level + self.Xi.level != 0:
            raise ValueError("tile needs s(I) * s(Xi) = 1")
        if self.I.dim != self.Xi.dim:
            raise ValueError("dimension mismatch")

    @property
    def dim(self) -> int:
        return self.I.dim

    def key(self) -> tuple:
        return (self.I.level, self.I.corner, self.Xi.corner, self.Xi.shift)


@dataclass(frozen=True, order=True)
class VectorTile:
    """n tiles sharing one spatial cube."""

    I: DyadicCube
    Xis: tuple[ShiftedDyadicCube, ...]

    def __post_init__(self):
        if any(x.level != -self.I.level for x in self.Xis):
            raise ValueError("all frequency levels must equal -level(I)")

    @property
    def n(self) -> int:
        return len(self.Xis)

    def component(self, j: int) -> Tile:
        """Tile j, 0-based."""
        return Tile(self.I, self.Xis[j])

    @property
    def tiles(self) -> tuple[Tile, ...]:
        return tuple(Tile(self.I, x) for x in self.Xis)

    def frequency_box(self) -> Box:
        lo, hi = [], []
        for x in self.Xis:
            b = x.box()
            lo.extend(b.lo)
            hi.extend(b.hi)
        return Box(tuple(lo), tuple(hi))


# -- distances ---------------------------------------------------------------


def distance(a, b) -> Fraction:
    """Sup-norm distance between two boxes (closures)."""
    a, b = as_box(a), as_box(b)
    gap = Fraction(0)
    for al, ah, bl, bh in zip(a.lo, a.hi, b.lo, b.hi):
        gap = max(gap, bl - ah, al - bh)
    return gap


class SubspaceDistance:
    """Exact sup-norm distance to a linear subspace V of R^D.

    d(x, V) is the maximum of <y, x> over the polytope {y in V-perp, |y|_1 <= 1},
    attained at one of its finitely many vertices. For a cube Q of side s this
    gives d(Q, V) = max(0, d(c(Q), V) - s/2).
    """

    def __init__(self, basis: Sequence[Sequence], dim: int | None = None):
        basis = [[to_fraction(x) for x in v] for v in basis]
        if dim is None:
            if not basis:
                raise ValueError("dim required for the zero subspace")
            dim = len(basis[0])
        self.dim = dim
        self.basis = basis
        self.rank = rank(basis) if basis else 0
        self.vertices = self._vertices()
        self._vf = np.array([[float(x) for x in y] for y in self.vertices]) if self.vertices else np.zeros((0, dim))

    def _vertices(self) -> list[tuple[Fraction, ...]]:
        D, k = self.dim, self.rank
        if k == D:
            return []
        found: set[tuple[Fraction, ...]] = set()
        for size in range(1, k + 2):
            for S in combinations(range(D), size):
                rows = [[v[i] for i in S] for v in self.basis] if self.basis else []
                rows = [r for r in rows if any(x != 0 for x in r)]
                ker = nullspace(rows, size) if rows else [[Fraction(int(a == b)) for b in range(size)] for a in range(size)]
                if len(ker) != 1:
                    continue
                y = [Fraction(0)] * D
                norm = sum(abs(x) for x in ker[0])
                for i, x in zip(S, ker[0]):
                    y[i] = x / norm
                y = tuple(y)
                neg = tuple(-x for x in y)
                found.add(max(y, neg))
        return sorted(found)

    def point(self, x: Sequence) -> Fraction:
        x = [to_fraction(v) for v in x]
        if not self.vertices:
            return Fraction(0)
        return max(abs(sum((a * b for a, b in zip(y, x)), Fraction(0))) for y in self.vertices)

    def cube(self, q) -> Fraction:
        q = as_box(q)
        if not q.is_cube:
            raise ValueError("exact formula needs a cube")
        return max(Fraction(0), self.point(q.center) - q.side / 2)

    def points_float(self, xs: np.ndarray) -> np.ndarray:
        if not len(self._vf):
            return np.zeros(len(xs))
        return np.abs(xs @ self._vf.T).max(axis=1)


def distance_to_subspace(a, basis: Sequence[Sequence]) -> tuple[float, float]:
    """Two-sided enclosure of the sup-norm distance from a box to span(basis).

    Cubes use the exact formula (zero-width enclosure). General boxes use the
    center value minus the largest half side (lower) and the center value (upper).
    """
    a = as_box(a)
    sd = SubspaceDistance(basis, dim=a.dim)
    if a.is_cube:
        v = float(sd.cube(a))
        return v, v
    c = sd.point(a.center)
    return float(max(Fraction(0), c - a.side / 2)), float(c)


# -- covers and grids --------------------------------------------------------


def shifted_cover(q) -> ShiftedDyadicCube:
    """Shifted dyadic cube containing the cube q with side ratio in [2, 4)."""
    q = as_box(q)
    if not q.is_cube:
        raise ValueError("shifted_cover needs a cube")
    s = q.side
    k = 0
    while s * _pow2(k) > Fraction(1, 2):
        k -= 1
    # ratio in [2, 4) whatever the absolute scale, so covers commute with rescaling
    while s * _pow2(k) <= Fraction(1, 4):
        k += 1
    scale = _pow2(k)
    corner, shift = [], []
    for a in q.lo:
        z = floor(3 * a * scale)
        corner.append(z // 3)
        shift.append(z % 3)
    xi = ShiftedDyadicCube(-k, tuple(corner), tuple(shift))
    if not xi.box().contains(q):
        raise InvariantViolation("shifted cover does not contain the cube")
    return xi


def split_into_grids(cubes: Iterable[ShiftedDyadicCube]) -> list[set[ShiftedDyadicCube]]:
    groups: dict[tuple, set] = defaultdict(set)
    for c in cubes:
        groups[c.grid_key()].add(c)
    return [groups[k] for k in sorted(groups)]


def _distinct_boxes(cubes) -> list[Box]:
    seen = {}
    for c in cubes:
        b = as_box(c)
        seen[(b.lo, b.hi)] = b
    return list(seen.values())


def is_grid(cubes) -> bool:
    boxes = _distinct_boxes(cubes)
    for a, b in combinations(boxes, 2):
        if a.intersects(b) and not (a.contains(b) or b.contains(a)):
            return False
    return True


def is_central_grid(cubes, W) -> bool:
    W = to_fraction(W)
    boxes = _distinct_boxes(cubes)
    for a, b in combinations(boxes, 2):
        if a.intersects(b):
            if b.contains(a):
                small, big = a, b
            elif a.contains(b):
                small, big = b, a
            else:
                return False
            if not big.contains(small.dilate(W)):
                return False
    return True


def is_sparse(cubes, L) -> bool:
    L = to_fraction(L)
    boxes = _distinct_boxes(cubes)
    for a, b in combinations(boxes, 2):
        sa, sb = a.side, b.side
        if sa == sb:
            if not distance(a, b) > L * sa:
                return False
        elif not max(sa, sb) > L * min(sa, sb):
            return False
    return True


def _pair_conflict(a: Box, b: Box, L: Fraction) -> bool:
    if a.intersects(b) and not (a.contains(b) or b.contains(a)):
        return True
    if a.side == b.side:
        return not distance(a, b) > L * a.side
    return not max(a.side, b.side) > L * min(a.side, b.side)


def sparsify(tiles: Iterable[VectorTile], C3) -> list[list[VectorTile]]:
    """Split vector tiles into groups whose per-coordinate frequency families are C3-sparse grids.

    Input that already qualifies comes back as one group. Otherwise tiles are
    bucketed by (level mod K, grid family of every coordinate) with 2^K > C3,
    then same-level frequency vectors closer than C3 side lengths are separated
    by greedy colouring. Tiles sharing a frequency vector always stay together.
    """
    C3 = to_fraction(C3)
    tiles = sorted(set(tiles))
    if not tiles:
        return []
    by_freq: dict[tuple, list[VectorTile]] = defaultdict(list)
    for t in tiles:
        by_freq[t.Xis].append(t)
    freqs = sorted(by_freq)
    n = len(freqs[0])

    def valid(fs) -> bool:
        return all(is_sparse([f[j] for f in fs], C3) and is_grid([f[j] for f in fs]) for j in range(n))

    if valid(freqs):
        return [tiles]
    K = 1
    while _pow2(K) <= C3:
        K += 1
    buckets: dict[tuple, list] = defaultdict(list)
    for f in freqs:
        buckets[(f[0].level % K, tuple(x.grid_key() for x in f))].append(f)
    groups = []
    for bkey in sorted(buckets):
        members = sorted(buckets[bkey])
        colour: dict[tuple, int] = {}
        for f in members:
            used = set()
            for g, cg in colour.items():
                if g[0].level != f[0].level:
                    continue
                if any(f[j] != g[j] and _pair_conflict(f[j].box(), g[j].box(), C3) for j in range(n)):
                    used.add(cg)
            c = 0
            while c in used:
                c += 1
            colour[f] = c
        for c in sorted(set(colour.values())):
            group = [t for f in members if colour[f] == c for t in by_freq[f]]
            groups.append(sorted(group))
    for g in groups:
        if not valid(sorted({t.Xis for t in g})):
            raise InvariantViolation("sparsify produced a group that is not a sparse grid")
    return groups


# -- centralization ----------------------------------------------------------


def _hull_cube(boxes: Sequence[Box]) -> Box:
    d = boxes[0].dim
    lo = [min(b.lo[k] for b in boxes) for k in range(d)]
    hi = [max(b.hi[k] for b in boxes) for k in range(d)]
    side = max(h - l for l, h in zip(lo, hi))
    out_lo, out_hi = [], []
    for l, h in zip(lo, hi):
        pad = (side - (h - l)) / 2
        out_lo.append(l - pad)
        out_hi.append(h + pad)
    return Box(tuple(out_lo), tuple(out_hi))


def centralize(cubes, L, floor_L=10**4) -> dict[Box, Box]:
    """Map each cube A of an L-sparse family to G(A) with A in G(A) in 2A.

    The image is an L^(1/2)-central grid. Cubes are processed by increasing side;
    G(A) starts at A and absorbs L^(1/2) G(A') for every smaller A' within
    10 s(A') of the current hull, one scale at a time from large to small.
    """
    L = to_fraction(L)
    boxes = sorted(_distinct_boxes(cubes), key=lambda b: (b.side, b.lo))
    if not boxes:
        return {}
    if L < floor_L:
        raise NotSparse(f"L = {L} is below the floor {floor_L}")
    if not all(b.is_cube for b in boxes):
        raise NotSparse("centralize needs cubes")
    if not is_sparse(boxes, L):
        raise NotSparse("input family is not L-sparse")
    W = exact_sqrt(L)
    G: dict[Box, Box] = {}
    by_scale: dict[Fraction, list[Box]] = defaultdict(list)
    for b in boxes:
        by_scale[b.side].append(b)
    scales = sorted(by_scale)
    for A in boxes:
        cur = A
        smaller = [s for s in scales if s < A.side]
        for s in reversed(smaller):
            grown = [G[B].dilate(W) for B in by_scale[s] if distance(G[B], cur) <= 10 * s]
            if grown:
                cur = _hull_cube([cur] + grown)
        G[A] = cur
    for A, GA in G.items():
        if not (GA.contains(A) and A.dilate(2).contains(GA)):
            raise InvariantViolation(f"A in G(A) in 2A fails for {A}")
    if not is_central_grid(list(G.values()), W):
        raise InvariantViolation("centralized family is not a central grid")
    return G


# -- Whitney decomposition ---------------------------------------------------


@dataclass
class WhitneyResult:
    cubes: list[DyadicCube]
    rows: list[dict]
    dropped_volume: Fraction
    window: Box
    C1: Fraction
    c_measured: float = field(default=float("nan"))
    C_measured: float = field(default=float("nan"))
    C_interior: float = field(default=float("nan"))

    def __iter__(self):
        return iter(self.cubes)

    def __len__(self):
        return len(self.cubes)


def whitney_decompose(basis: Sequence[Sequence], window: Box, scale_range: tuple[int, int], C1=8) -> WhitneyResult:
    """Dyadic cubes Q in the window with d(Q, V) comparable to C1 s(Q).

    Starts from the level l_max tiling of the window (whose corners must be
    multiples of 2^l_max) and subdivides every cube with d(Q, V) < C1 s(Q)
    down to l_min; cubes still too close at l_min are dropped and their volume
    recorded. Accepted cubes below the top level satisfy
    C1 s <= d(Q, V) < (2 C1 + 2) s.
    """
    C1 = to_fraction(C1)
    if C1 < 4:
        raise ValueError("C1 must be at least 4")
    l_min, l_max = scale_range
    if l_min > l_max:
        raise ValueError("scale_range must satisfy l_min <= l_max")
    D = window.dim
    sd = SubspaceDistance(basis, dim=D)
    if sd.rank == D:
        raise DegenerateProjection("the subspace fills the ambient space")
    top = _pow2(l_max)
    lo_idx, hi_idx = [], []
    for l, h in zip(window.lo, window.hi):
        a, b = l / top, h / top
        if a.denominator != 1 or b.denominator != 1:
            raise ValueError("window corners must be multiples of 2^l_max")
        lo_idx.append(int(a))
        hi_idx.append(int(b))
    grids = np.meshgrid(*[np.arange(a, b, dtype=np.int64) for a, b in zip(lo_idx, hi_idx)], indexing="ij")
    corners = np.stack([g.ravel() for g in grids], axis=1)
    accepted: list[tuple[int, np.ndarray]] = []
    dropped = Fraction(0)
    level = l_max
    while len(corners):
        s = float(_pow2(level))
        centers = (corners.astype(float) + 0.5) * s
        dist = np.maximum(sd.points_float(centers) - s / 2, 0.0)
        margin = float(C1) * s
        ok = dist >= margin
        close = np.abs(dist - margin) <= 1e-9 * max(1.0, margin)
        for i in np.nonzero(close)[0]:
            q = DyadicCube(level, tuple(int(c) for c in corners[i]))
            ok[i] = sd.cube(q) >= C1 * q.side
        if ok.any():
            accepted.append((level, corners[ok]))
        rest = corners[~ok]
        if level == l_min:
            dropped += len(rest) * _pow2(level) ** D
            break
        offsets = np.array([[(b >> k) & 1 for k in range(D)] for b in range(2 ** D)], dtype=np.int64)
        corners = (2 * rest[:, None, :] + offsets[None, :, :]).reshape(-1, D)
        level -= 1
    cubes: list[DyadicCube] = []
    for level, cs in accepted:
        cubes.extend(DyadicCube(level, tuple(int(x) for x in c)) for c in cs)
    cubes.sort()
    rows = []
    ratios, interior = [], []
    for q in cubes:
        d = sd.cube(q)
        ratio = float(d / (C1 * q.side))
        ratios.append(ratio)
        if q.level < l_max:
            interior.append(ratio)
        row = {"level": q.level}
        for k, c in enumerate(q.corner):
            row[f"corner{k}"] = c
        row.update({"dist_lower": float(d), "dist_upper": float(d), "ratio": ratio})
        rows.append(row)
    res = WhitneyResult(cubes, rows, dropped, window, C1)
    if ratios:
        res.c_measured = min(ratios)
        res.C_measured = max(ratios)
        res.C_interior = max(interior) if interior else float("nan")
    return res
