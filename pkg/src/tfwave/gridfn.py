"""Sampled functions on uniform grids and square-function norms of dyadic coefficient families."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import GridMismatch
from .geometry import Box, DyadicCube, lowest_common_ancestor


class GridFunction:
    """Complex samples at the cell midpoints of an N^d grid over a box."""

    def __init__(self, domain: Box, N: int, values=None):
        if N < 2:
            raise ValueError("N must be at least 2")
        self.domain = domain
        self.N = int(N)
        shape = (self.N,) * domain.dim
        if values is None:
            values = np.zeros(shape, dtype=complex)
        values = np.asarray(values, dtype=complex)
        if values.shape != shape:
            raise ValueError(f"values must have shape {shape}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        self.values = values
        self.values.setflags(write=False)

    @property
    def d(self) -> int:
        return self.domain.dim

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(float(s) / self.N for s in self.domain.sides)

    @property
    def cell_volume(self) -> Fraction:
        v = Fraction(1)
        for s in self.domain.sides:
            v *= s / self.N
        return v

    def axis(self, k: int) -> np.ndarray:
        lo = float(self.domain.lo[k])
        h = self.spacing[k]
        return lo + (np.arange(self.N) + 0.5) * h

    def axes(self) -> list[np.ndarray]:
        return [self.axis(k) for k in range(self.d)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def same_grid(self, other: "GridFunction") -> bool:
        return self.N == other.N and self.domain == other.domain

    def check_grid(self, other: "GridFunction") -> None:
        if not self.same_grid(other):
            raise GridMismatch("grid functions live on different grids")

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain, self.N, values)

    @classmethod
    def from_callable(cls, domain: Box, N: int, fn) -> "GridFunction":
        g = cls(domain, N)
        return g.with_values(fn(*g.mesh()))

    @classmethod
    def indicator(cls, domain: Box, N: int, box: Box) -> "GridFunction":
        g = cls(domain, N)
        mask = np.ones((N,) * domain.dim, dtype=bool)
        for k, x in enumerate(g.mesh()):
            mask &= (x >= float(box.lo[k])) & (x < float(box.hi[k]))
        return g.with_values(mask.astype(complex))

    def __add__(self, other):
        self.check_grid(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        self.check_grid(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        if isinstance(c, GridFunction):
            self.check_grid(c)
            return self.with_values(self.values * c.values)
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def abs(self) -> "GridFunction":
        return self.with_values(np.abs(self.values))

    def measure(self, mask: np.ndarray) -> float:
        return float(np.count_nonzero(mask)) * float(self.cell_volume)

    # binary format: '<' d:int32 N:int32 then 2d f64 bounds then interleaved re/im f64
    def to_bytes(self) -> bytes:
        head = struct.pack("<ii", self.d, self.N)
        bounds = struct.pack(f"<{2 * self.d}d", *[float(x) for x in self.domain.lo], *[float(x) for x in self.domain.hi])
        body = np.ascontiguousarray(self.values, dtype="<c16").tobytes()
        return head + bounds + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFunction":
        d, N = struct.unpack_from("<ii", data, 0)
        bounds = struct.unpack_from(f"<{2 * d}d", data, 8)
        off = 8 + 16 * d
        vals = np.frombuffer(data[off:], dtype="<c16").reshape((N,) * d).copy()
        dom = Box(tuple(Fraction(x) for x in bounds[:d]), tuple(Fraction(x) for x in bounds[d:]))
        return cls(dom, N, vals)

    def write_csv(self, path, axis_index: int | None = None) -> None:
        """Write a 1-d function, or the 2-d slice at the given first-axis index."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.d == 1:
                w.writerow(["x", "re", "im"])
                for x, v in zip(self.axis(0), self.values):
                    w.writerow([x, v.real, v.imag])
            elif self.d == 2:
                i = self.N // 2 if axis_index is None else axis_index
                w.writerow(["x0", "x1", "re", "im"])
                x0 = self.axis(0)[i]
                for x1, v in zip(self.axis(1), self.values[i]):
                    w.writerow([x0, x1, v.real, v.imag])
            else:
                raise ValueError("CSV export supports d <= 2")


def lp_norm(f: GridFunction, p: float) -> float:
    a = np.abs(f.values)
    if p == np.inf:
        return float(a.max())
    if p <= 0:
        raise ValueError("p must be positive")
    top = float(a.max()) if a.size else 0.0
    if top == 0.0 or not np.isfinite(top):
        return top
    # scale out the maximum so tiny or huge values survive the power
    return top * float((np.sum((a / top) ** p) * float(f.cell_volume)) ** (1.0 / p))


def distribution_weak_norm(values: np.ndarray, measures: np.ndarray, p: float) -> float:
    """sup_t t |{|f| > t}|^(1/p) for a function taking ``values`` on sets of the given measures."""
    values = np.abs(np.asarray(values, dtype=float)).ravel()
    measures = np.broadcast_to(np.asarray(measures, dtype=float), values.shape).ravel()
    keep = values > 0
    values, measures = values[keep], measures[keep]
    if not len(values):
        return 0.0
    order = np.argsort(-values, kind="stable")
    v, mu = values[order], measures[order]
    cum = np.cumsum(mu)
    last = np.r_[v[1:] != v[:-1], True]
    return float(np.max(v[last] * cum[last] ** (1.0 / p)))


def weak_lp_norm(f: GridFunction, p: float) -> float:
    if p <= 0:
        raise ValueError("p must be positive")
    return distribution_weak_norm(np.abs(f.values), float(f.cell_volume), p)


def maximal_function(f: GridFunction) -> GridFunction:
    """Largest average of |f| over the grid-dyadic blocks containing each cell."""
    N, d = f.N, f.d
    levels = N.bit_length() - 1
    if 2**levels != N:
        raise ValueError("maximal_function needs N to be a power of two")
    a = np.abs(f.values).astype(float)
    out = a.copy()
    for k in range(1, levels + 1):
        b = 2**k
        shape = []
        for _ in range(d):
            shape += [N // b, b]
        avg = a.reshape(shape).mean(axis=tuple(range(1, 2 * d, 2)))
        up = avg
        for ax in range(d):
            up = np.repeat(up, b, axis=ax)
        np.maximum(out, up, out=out)
    return f.with_values(out)


# -- dyadic coefficient families ---------------------------------------------


class DyadicCoefficients(dict):
    """Map DyadicCube -> complex coefficient."""

    @property
    def support(self) -> list[DyadicCube]:
        return sorted(I for I, a in self.items() if a != 0)


def _weights(coeffs: Mapping[DyadicCube, complex]) -> dict[DyadicCube, float]:
    w: dict[DyadicCube, float] = {}
    for I, a in coeffs.items():
        if a != 0:
            w[I] = w.get(I, 0.0) + abs(a) ** 2 / float(I.volume)
    return w


def energy_distribution(weights: Mapping[DyadicCube, float]):
    """Pieces of S = (sum w_I 1_I)^(1/2) as (values, measures) arrays, S > 0 part only."""
    w = {I: v for I, v in weights.items() if v > 0}
    if not w:
        return np.zeros(0), np.zeros(0)
    cubes = sorted(w, key=lambda I: -I.level)
    top = cubes[0].level
    present = set(cubes)
    level_sq: dict[DyadicCube, float] = {}
    child_volume: dict[DyadicCube, float] = {I: 0.0 for I in cubes}
    for I in cubes:
        parent = None
        cur = I
        while cur.level < top:
            cur = cur.parent()
            if cur in present:
                parent = cur
                break
        base = level_sq[parent] if parent is not None else 0.0
        level_sq[I] = base + w[I]
        if parent is not None:
            child_volume[parent] += float(I.volume)
    vals = np.array([np.sqrt(level_sq[I]) for I in cubes])
    meas = np.array([float(I.volume) - child_volume[I] for I in cubes])
    return vals, meas


def square_distribution(coeffs: Mapping[DyadicCube, complex], within: DyadicCube | None = None):
    """Values and measures of the pieces on which the square function is constant.

    Only the region where S > 0 is described. Returns (values, measures) arrays.
    """
    w = _weights(coeffs)
    if within is not None:
        w = {I: v for I, v in w.items() if within.contains(I)}
    return energy_distribution(w)


def square_function(coeffs: Mapping[DyadicCube, complex], domain: Box | None = None, N: int | None = None) -> GridFunction:
    """S(x) = (sum |a_I|^2 / |I| 1_I(x))^(1/2) sampled on a grid.

    Without a domain the smallest dyadic cube containing the support is used at
    the resolution of the finest cube, which makes the samples exact.
    """
    w = _weights(coeffs)
    if not w:
        raise ValueError("empty coefficient family")
    cubes = list(w)
    d = cubes[0].dim
    if domain is None:
        root = cubes[0]
        for I in cubes[1:]:
            root = lowest_common_ancestor(root, I)
            if root is None:
                raise ValueError("cubes span several orthants; pass a domain")
        fine = min(I.level for I in cubes)
        N = max(2, 2 ** (root.level - fine))
        domain = root.box()
    g = GridFunction(domain, N)
    sq = np.zeros((N,) * d)
    mesh = g.mesh()
    for I, v in w.items():
        b = I.box()
        mask = np.ones_like(sq, dtype=bool)
        for k in range(d):
            mask &= (mesh[k] >= float(b.lo[k])) & (mesh[k] < float(b.hi[k]))
        sq[mask] += v
    return g.with_values(np.sqrt(sq))


def seq_lp(coeffs: Mapping[DyadicCube, complex], p: float, within: DyadicCube | None = None) -> float:
    vals, meas = square_distribution(coeffs, within)
    if p == np.inf:
        return float(vals.max()) if len(vals) else 0.0
    return float(np.sum(vals**p * meas) ** (1.0 / p))


def seq_weak(coeffs: Mapping[DyadicCube, complex], p: float, within: DyadicCube | None = None) -> float:
    vals, meas = square_distribution(coeffs, within)
    return distribution_weak_norm(vals, meas, p)


def seq_bmo(coeffs: Mapping[DyadicCube, complex]) -> float:
    """sup over I0 in the support of (sum_{I in I0} |a_I|^2 / |I0|)^(1/2)."""
    supp = [I for I, a in coeffs.items() if a != 0]
    best = 0.0
    for I0 in supp:
        e = sum(abs(a) ** 2 for I, a in coeffs.items() if a != 0 and I0.contains(I))
        best = max(best, (e / float(I0.volume)) ** 0.5)
    return best


def localized_sup(coeffs: Mapping[DyadicCube, complex], p: float, weak: bool = False) -> float:
    supp = sorted({I for I, a in coeffs.items() if a != 0})
    best = 0.0
    for I0 in supp:
        val = seq_weak(coeffs, p, I0) if weak else seq_lp(coeffs, p, I0)
        best = max(best, val / float(I0.volume) ** (1.0 / p))
    return best


def john_nirenberg_ratio(coeffs: Mapping[DyadicCube, complex], p: float, q: float) -> float:
    """Localized strong-p supremum over localized weak-q supremum."""
    if p <= 0 or q <= 0:
        raise ValueError("p, q must be positive")
    den = localized_sup(coeffs, q, weak=True)
    if den == 0:
        return float("nan")
    return localized_sup(coeffs, p) / den


@dataclass
class InterpolationCheck:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs else float("nan")


def interpolation_check(coeffs: Mapping[DyadicCube, complex], p: float) -> InterpolationCheck:
    if p < 2:
        raise ValueError("p must be at least 2")
    lhs = seq_lp(coeffs, p)
    rhs = seq_lp(coeffs, 2) ** (2.0 / p) * seq_bmo(coeffs) ** (1.0 - 2.0 / p)
    return InterpolationCheck(lhs, rhs)


def random_dyadic_family(rng: np.random.Generator, d: int = 1, size: int = 12, depth: int = 6) -> DyadicCoefficients:
    """Random coefficients on cubes inside [0,1)^d spread over ``depth`` levels."""
    out = DyadicCoefficients()
    for _ in range(size):
        lvl = -int(rng.integers(0, depth))
        corner = tuple(int(c) for c in rng.integers(0, 2 ** (-lvl), size=d))
        I = DyadicCube(lvl, corner)
        scale = float(I.volume) ** 0.5 * float(np.exp(rng.normal()))
        out[I] = complex(rng.normal(), rng.normal()) * scale
    return out


def weak_duality_check(f: GridFunction, p: float, rng: np.random.Generator, trials: int = 32) -> tuple[float, float]:
    """Compare ||f||_{p,inf} with sup over E of inf over large E' in E of |<f, 1_E'>| / |E|^(1-1/p).

    For each trial set E (a random superlevel or random subset) the inner
    infimum is computed exactly for the nonnegative |f| by removing the
    largest values of |f| up to half the measure of E. Returns (weak norm, dual estimate).
    """
    a = np.abs(f.values).ravel()
    cell = float(f.cell_volume)
    weak = weak_lp_norm(f, p)
    best = 0.0
    order = np.argsort(-a, kind="stable")
    for t in range(trials):
        if t % 2 == 0:
            k = int(rng.integers(1, len(a) + 1))
            idx = order[:k]
        else:
            idx = np.nonzero(rng.random(len(a)) < rng.random())[0]
            if not len(idx):
                continue
        vals = np.sort(a[idx])
        keep = vals[: (len(vals) + 1) // 2]
        mE = len(idx) * cell
        best = max(best, float(keep.sum() * cell) / mE ** (1 - 1 / p))
    return weak, best
