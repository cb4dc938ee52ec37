"""Band-limited frame profile, wave packets on grids and their inner products.

The one-dimensional profile has Fourier transform

    rho_hat(xi) = sqrt(theta(xi / r) / sum_z theta((xi - z/3) / r)),
    theta(t) = exp(-1 / (1 - t^2)) on |t| < 1,

so the squares of its (1/3)Z translates sum to one exactly. With
1/6 < r < 1/4 every point is covered and the support has length below 1/2.
In d dimensions the profile is the tensor product.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import GridMismatch, TileOutsideDomain
from .geometry import Box, DyadicCube, ShiftedDyadicCube, Tile
from .gridfn import GridFunction


def _theta(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


class FrameProfile:
    def __init__(self, d: int = 1, radius: float = 0.24, decay_order: int | None = None, nodes: int = 4096):
        if d < 1:
            raise ValueError("d must be positive")
        if not 1 / 6 < radius < 0.25:
            raise ValueError("radius must lie in (1/6, 1/4)")
        self.d = d
        self.radius = float(radius)
        self.decay_order = decay_order if decay_order is not None else 10 * d
        self.nodes = int(nodes)
        # symmetric trapezoid nodes on [-r, r]; the integrand vanishes to all orders at the ends
        self._xi = np.linspace(-self.radius, self.radius, self.nodes + 1)
        self._w = np.full(self._xi.shape, 2 * self.radius / self.nodes)
        self._w[[0, -1]] *= 0.5
        self._rh = self.rho_hat1(self._xi)
        self._cache: dict[float, float] = {}
        self.norm1_sq = float(np.sum(self._w * self._rh**2))

    def rho_hat1(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        r = self.radius
        num = _theta(xi / r)
        den = np.zeros_like(xi)
        base = np.round(3 * xi)
        for off in (-2, -1, 0, 1, 2):
            den += _theta((xi - (base + off) / 3) / r)
        out = np.zeros_like(xi)
        pos = num > 0
        out[pos] = np.sqrt(num[pos] / den[pos])
        return out

    def rho_hat(self, xi) -> np.ndarray:
        """Tensor profile at points of shape (..., d)."""
        xi = np.asarray(xi, dtype=float)
        out = np.ones(xi.shape[:-1])
        for k in range(self.d):
            out = out * self.rho_hat1(xi[..., k])
        return out

    def partition_sum1(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        base = np.round(3 * xi)
        tot = np.zeros_like(xi)
        for off in range(-3, 4):
            tot += self.rho_hat1(xi - (base + off) / 3) ** 2
        return tot

    def partition_sum(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = np.ones(xi.shape[:-1])
        for k in range(self.d):
            out = out * self.partition_sum1(xi[..., k])
        return out

    def _quad(self, x: np.ndarray, deriv: bool = False) -> np.ndarray:
        out = np.empty(x.shape, dtype=float)
        chunk = max(1, 2_000_000 // len(self._xi))
        for s in range(0, len(x), chunk):
            xs = x[s : s + chunk, None]
            phase = 2 * np.pi * xs * self._xi[None, :]
            if deriv:
                out[s : s + chunk] = -np.sum(self._w * 2 * np.pi * self._xi * self._rh * np.sin(phase), axis=1)
            else:
                out[s : s + chunk] = np.sum(self._w * self._rh * np.cos(phase), axis=1)
        return out

    def rho1(self, x) -> np.ndarray:
        """Inverse transform of rho_hat1 (real and even), memoized per point."""
        x = np.asarray(x, dtype=float)
        flat = np.round(x.ravel(), 12)
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.empty(len(uniq))
        missing = [i for i, u in enumerate(uniq) if u not in self._cache]
        if missing:
            got = self._quad(uniq[missing])
            for i, v in zip(missing, got):
                self._cache[uniq[i]] = v
        for i, u in enumerate(uniq):
            vals[i] = self._cache[u]
        return vals[inv].reshape(x.shape)

    def drho1(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._quad(x.ravel(), deriv=True).reshape(x.shape)

    def rho(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for k in range(self.d):
            out = out * self.rho1(x[..., k])
        return out

    @property
    def norm_sq(self) -> float:
        """||rho||_2^2 = (int rho_hat1^2)^d."""
        return self.norm1_sq**self.d

    def decay_constant(self, xs: np.ndarray, order: int | None = None) -> float:
        """max over xs of (1 + |x|)^N (|rho1(x)| + |rho1'(x)|)."""
        N = self.decay_order if order is None else order
        xs = np.asarray(xs, dtype=float)
        vals = np.abs(self.rho1(xs)) + np.abs(self.drho1(xs))
        return float(np.max((1 + np.abs(xs)) ** N * vals))


def make_frame_profile(d: int, radius: float = 0.24, decay_order: int | None = None, nodes: int = 4096) -> FrameProfile:
    return FrameProfile(d, radius, decay_order, nodes)


# -- packets -----------------------------------------------------------------


def _axis_factor(profile: FrameProfile, xs: np.ndarray, a: float, c: float, s: float) -> np.ndarray:
    """s^(-1/2) exp(2 pi i c (x - a)) rho1((x - a) / s) on one axis."""
    u = xs - a
    return s**-0.5 * np.exp(2j * np.pi * c * u) * profile.rho1(u / s)


def _tile_params(tile: Tile):
    s = float(tile.I.side)
    a = [float(x) for x in tile.I.center]
    c = [float(x) for x in tile.Xi.center]
    return s, a, c


def make_wave_packet(tile: Tile, profile: FrameProfile, grid: GridFunction) -> GridFunction:
    """phi(x) = |I|^(-1/2) e^{2 pi i c(Xi).(x - c(I))} rho((x - c(I)) / s(I)) sampled on the grid."""
    if tile.dim != grid.d or profile.d != grid.d:
        raise GridMismatch("dimension mismatch between tile, profile and grid")
    if not grid.domain.contains(tile.I.box()):
        raise TileOutsideDomain(f"spatial cube {tile.I} is not inside the grid domain")
    s, a, c = _tile_params(tile)
    vals = None
    for k, xs in enumerate(grid.axes()):
        f = _axis_factor(profile, xs, a[k], c[k], s)
        vals = f if vals is None else np.multiply.outer(vals, f)
    return grid.with_values(vals)


def inner_product(f: GridFunction, phi: GridFunction) -> complex:
    f.check_grid(phi)
    return complex(np.sum(f.values * np.conj(phi.values)) * float(f.cell_volume))


def tile_coefficients(f: GridFunction, tiles: Sequence[Tile], profile: FrameProfile) -> np.ndarray:
    """<f | phi_R> for every tile, using the tensor structure of the packets."""
    out = np.zeros(len(tiles), dtype=complex)
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, t in enumerate(tiles):
        groups[(t.Xi, t.I.level)].append(i)
    axes = f.axes()
    cell = float(f.cell_volume)
    for (xi, level), idx in groups.items():
        s = float(Fraction(2) ** level)
        c = [float(x) for x in xi.center]
        per_axis = []
        for k in range(f.d):
            corners = sorted({tiles[i].I.corner[k] for i in idx})
            pos = {z: p for p, z in enumerate(corners)}
            mat = np.stack([_axis_factor(profile, axes[k], (z + 0.5) * s, c[k], s) for z in corners], axis=1)
            per_axis.append((mat, pos))
        T = f.values
        for k, (mat, _) in enumerate(per_axis):
            T = np.tensordot(T, np.conj(mat), axes=([0], [0]))
        T = T * cell
        for i in idx:
            key = tuple(per_axis[k][1][tiles[i].I.corner[k]] for k in range(f.d))
            out[i] = T[key]
    return out


def synthesize(grid: GridFunction, tiles: Sequence[Tile], coeffs: Sequence[complex], profile: FrameProfile) -> GridFunction:
    """sum_R coeffs_R phi_R on the grid."""
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, t in enumerate(tiles):
        groups[(t.Xi, t.I.level)].append(i)
    axes = grid.axes()
    total = np.zeros((grid.N,) * grid.d, dtype=complex)
    for (xi, level), idx in groups.items():
        s = float(Fraction(2) ** level)
        c = [float(x) for x in xi.center]
        mats, poss = [], []
        for k in range(grid.d):
            corners = sorted({tiles[i].I.corner[k] for i in idx})
            poss.append({z: p for p, z in enumerate(corners)})
            mats.append(np.stack([_axis_factor(profile, axes[k], (z + 0.5) * s, c[k], s) for z in corners], axis=1))
        C = np.zeros(tuple(m.shape[1] for m in mats), dtype=complex)
        for i in idx:
            C[tuple(poss[k][tiles[i].I.corner[k]] for k in range(grid.d))] += coeffs[i]
        T = C
        for m in mats:
            T = np.tensordot(T, m, axes=([0], [1]))
        total += T
    return grid.with_values(total)


@dataclass
class FrameReconstruction:
    reconstruction: GridFunction
    relative_error: float
    n_tiles: int
    dropped_energy: float
    tiles: list[Tile]
    coefficients: np.ndarray


def frame_tiles(grid: GridFunction, scale: int, margin: int = 4) -> list[Tile]:
    """All tiles with s(Xi) = 2^scale whose band meets the grid's Nyquist band and whose
    spatial cube lies within ``margin`` cubes of the domain."""
    d = grid.d
    s_xi = Fraction(2) ** scale
    s_I = 1 / s_xi
    per_axis_freq, per_axis_space = [], []
    for k in range(d):
        h = grid.spacing[k]
        nyq = 0.5 / h
        r = 0.25 * float(s_xi)
        # centers 2^scale (w/3 + 1/2)
        wmin = int(np.floor(3 * ((-nyq - r) / float(s_xi) - 0.5))) - 1
        wmax = int(np.ceil(3 * ((nyq + r) / float(s_xi) - 0.5))) + 1
        ws = [w for w in range(wmin, wmax + 1) if abs(float(s_xi) * (w / 3 + 0.5)) - r < nyq]
        per_axis_freq.append(ws)
        lo = grid.domain.lo[k] / s_I
        hi = grid.domain.hi[k] / s_I
        ks = range(int(np.floor(float(lo))) - margin, int(np.ceil(float(hi))) + margin)
        per_axis_space.append(list(ks))
    tiles = []
    for ws in np.array(np.meshgrid(*per_axis_freq, indexing="ij")).reshape(d, -1).T:
        corner = tuple(int(w) // 3 for w in ws)
        shift = tuple(int(w) % 3 for w in ws)
        xi = ShiftedDyadicCube(scale, corner, shift)
        for ks in np.array(np.meshgrid(*per_axis_space, indexing="ij")).reshape(d, -1).T:
            tiles.append(Tile(DyadicCube(-scale, tuple(int(z) for z in ks)), xi))
    return tiles


def frame_reconstruct(g: GridFunction, scale: int, profile: FrameProfile | None = None, threshold: float = 1e-12, margin: int = 4) -> FrameReconstruction:
    """Truncated sum over one scale of <g|phi_R> phi_R, with its relative L2 error."""
    profile = profile or FrameProfile(g.d)
    tiles = frame_tiles(g, scale, margin)
    coeffs = tile_coefficients(g, tiles, profile)
    gnorm = float(np.sqrt(np.sum(np.abs(g.values) ** 2) * float(g.cell_volume)))
    if gnorm == 0:
        return FrameReconstruction(g.with_values(np.zeros_like(g.values)), 0.0, 0, 0.0, [], np.zeros(0, dtype=complex))
    keep = np.abs(coeffs) >= threshold * gnorm
    dropped = float(np.sum(np.abs(coeffs[~keep]) ** 2))
    kept_tiles = [t for t, k in zip(tiles, keep) if k]
    rec = synthesize(g, kept_tiles, coeffs[keep], profile)
    err = float(np.sqrt(np.sum(np.abs(rec.values - g.values) ** 2) * float(g.cell_volume))) / gnorm
    return FrameReconstruction(rec, err, len(kept_tiles), dropped, kept_tiles, coeffs[keep])


# -- frequency-side inner products -------------------------------------------


MAX_OSCILLATIONS = 2048


def _axis_gram(profile: FrameProfile, s1: Fraction, c1: Fraction, s2: Fraction, c2: Fraction, da: Sequence[Fraction]) -> np.ndarray:
    """int (s1 s2)^(1/2) e^{-2 pi i da xi} rho_hat1(s1 (xi - c1)) rho_hat1(s2 (xi - c2)) dxi for each da = a1 - a2.

    The integral runs over u = xi - lo with lo exact, so large frequencies keep
    their phase: exp(-2 pi i da lo) is reduced modulo one in rational arithmetic.
    """
    r = Fraction(profile.radius)
    lo = max(c1 - r / s1, c2 - r / s2)
    hi = min(c1 + r / s1, c2 + r / s2)
    if hi <= lo:
        return np.zeros(len(da), dtype=complex)
    width = float(hi - lo)
    dfl = np.array([float(x) for x in da])
    out = np.zeros(len(da), dtype=complex)
    # beyond this many oscillations the smooth integrand gives values far below quadrature error
    near = np.abs(dfl) * width <= MAX_OSCILLATIONS
    if not near.any():
        return out
    da = [x for x, keep in zip(da, near) if keep]
    dfl = dfl[near]
    M = int(256 + 8 * float(np.max(np.abs(dfl))) * width)
    u = np.linspace(0.0, width, M + 1)
    w = np.full(M + 1, width / M)
    w[[0, -1]] *= 0.5
    f1, f2 = float(s1), float(s2)
    base = np.sqrt(f1 * f2) * profile.rho_hat1(float(s1 * (lo - c1)) + f1 * u) * profile.rho_hat1(float(s2 * (lo - c2)) + f2 * u) * w
    shift = np.array([float((x * lo) % 1) for x in da])
    out[near] = np.exp(-2j * np.pi * shift) * (np.exp(-2j * np.pi * np.multiply.outer(dfl, u)) @ base)
    return out


def _exact_params(tile: Tile):
    return tile.I.side, tile.I.center, tile.Xi.center


def packet_gram(tiles_a: Sequence[Tile], tiles_b: Sequence[Tile], profile: FrameProfile) -> np.ndarray:
    """Matrix of <phi_a | phi_b> computed on the frequency side (up to quadrature)."""
    G = np.ones((len(tiles_a), len(tiles_b)), dtype=complex)
    pa = [_exact_params(t) for t in tiles_a]
    pb = [_exact_params(t) for t in tiles_b]
    r = Fraction(profile.radius)
    for k in range(profile.d):
        groups: dict[tuple, list[tuple[int, int]]] = defaultdict(list)
        for i, (s1, a1, c1) in enumerate(pa):
            for j, (s2, a2, c2) in enumerate(pb):
                if abs(c1[k] - c2[k]) >= r * (1 / s1 + 1 / s2):
                    continue
                groups[(s1, c1[k], s2, c2[k])].append((i, j))
        touched = np.zeros(G.shape, dtype=bool)
        for (s1, c1, s2, c2), pairs in groups.items():
            ii = np.array([p[0] for p in pairs])
            jj = np.array([p[1] for p in pairs])
            da = [pa[i][1][k] - pb[j][1][k] for i, j in pairs]
            G[ii, jj] *= _axis_gram(profile, s1, c1, s2, c2, da)
            touched[ii, jj] = True
        G[~touched] = 0
    return G


@dataclass
class OverlapRow:
    distance: float
    value: float
    weighted: float


def overlap_decay_check(tiles: Sequence[Tile], profile: FrameProfile, reference: int = 0) -> list[OverlapRow]:
    """|<phi_ref | phi_I'>| (1 + d(I, I')/s)^(5d) for same-scale tiles sharing the reference frequency cube."""
    ref = tiles[reference]
    if any(t.I.level != ref.I.level for t in tiles):
        raise ValueError("overlap_decay_check needs same-scale tiles")
    G = packet_gram([ref], tiles, profile)[0]
    from .geometry import distance

    s = float(ref.I.side)
    rows = []
    for t, v in zip(tiles, G):
        dist = float(distance(ref.I, t.I))
        rows.append(OverlapRow(dist, abs(v), abs(v) * (1 + dist / s) ** (5 * profile.d)))
    return rows


# -- indicator coefficients --------------------------------------------------


TAIL_CUTOFF = 64


class _AxisPrimitive:
    """G(omega, t) = int_{-inf}^t e^{-2 pi i omega u} rho1(u) du for one profile.

    Away from the support of rho_hat1 this is
    e^{-2 pi i omega t} / (2 pi i) * int rho_hat1(eta) e^{2 pi i eta t} / (eta - omega) deta,
    a smooth integral over [-r, r]. Near the support the u-integral is taken
    directly with Gauss-Legendre panels. Beyond |t| > TAIL_CUTOFF the value is
    replaced by its limit (0 on the left, rho_hat1(omega) on the right).
    The oscillating factor e^{-2 pi i omega t} is applied from exact omega t mod 1.
    """

    def __init__(self, profile: FrameProfile):
        self.profile = profile
        self._gl_x, self._gl_w = np.polynomial.legendre.leggauss(16)
        self._panels: dict[float, np.ndarray] = {}
        self._memo: dict[float, dict[float, complex]] = defaultdict(dict)

    def near(self, omega: float) -> bool:
        return abs(omega) < self.profile.radius + 0.05

    def _panel_sums(self, omega: float) -> np.ndarray:
        if omega not in self._panels:
            T = TAIL_CUTOFF
            left = np.arange(-T, T, dtype=float)
            u = left[:, None] + 0.5 + 0.5 * self._gl_x[None, :]
            vals = np.exp(-2j * np.pi * omega * u) * self.profile.rho1(u)
            self._panels[omega] = np.concatenate([[0], np.cumsum(0.5 * vals @ self._gl_w)])
        return self._panels[omega]

    def _compute(self, omega: float, ts: np.ndarray) -> np.ndarray:
        out = np.zeros(len(ts), dtype=complex)
        T = TAIL_CUTOFF
        inside = np.abs(ts) <= T
        if self.near(omega):
            out[ts > T] = float(self.profile.rho_hat1(np.array([omega]))[0])
            if inside.any():
                cum = self._panel_sums(omega)
                t = ts[inside]
                k = np.minimum(np.floor(t).astype(int), T - 1)
                frac = t - k
                u = k[:, None] + frac[:, None] * 0.5 * (1 + self._gl_x[None, :])
                part = (np.exp(-2j * np.pi * omega * u) * self.profile.rho1(u)) @ self._gl_w * 0.5 * frac
                out[inside] = cum[k + T] + part
            return out
        if inside.any():
            p = self.profile
            ker = p._w * p._rh / (p._xi - omega)
            out[inside] = np.exp(2j * np.pi * np.multiply.outer(ts[inside], p._xi)) @ ker / (2j * np.pi)
        return out

    def reduced(self, omega: float, ts: np.ndarray) -> np.ndarray:
        """G without its oscillating factor in the far case, G itself near the support."""
        ts = np.asarray(ts, dtype=float)
        memo = self._memo[omega]
        uniq = np.unique(ts)
        missing = np.array([t for t in uniq if t not in memo])
        if len(missing):
            for t, v in zip(missing, self._compute(omega, missing)):
                memo[t] = v
        return np.array([memo[t] for t in ts], dtype=complex)

    def values(self, omega: Fraction, ts: Sequence[Fraction]) -> np.ndarray:
        om = float(omega)
        red = self.reduced(om, np.array([float(t) for t in ts]))
        if not self.near(om):
            red = red * np.exp(-2j * np.pi * np.array([float((omega * t) % 1) for t in ts]))
        return red

    def progression(self, omega: Fraction, t0: Fraction, delta: Fraction, count: int) -> np.ndarray:
        """G at t0, t0 + delta, ..., t0 + (count - 1) delta."""
        om = float(omega)
        c = np.arange(count)
        red = self.reduced(om, float(t0) + c * float(delta))
        if not self.near(om):
            a, b = float((omega * t0) % 1), float((omega * delta) % 1)
            red = red * np.exp(-2j * np.pi * np.mod(a + c * b, 1.0))
        return red


def indicator_coefficients(tiles: Sequence[Tile], boxes: Sequence[Box], profile: FrameProfile) -> np.ndarray:
    """<1_E | phi_R> for E the union of disjoint boxes, one value per tile.

    Each axis factor is s^(1/2) (G(t_b) - G(t_a)) with t = (edge - c(I)) / s,
    omega = c(Xi) s; the phase is reduced modulo one in exact arithmetic, so
    frequencies far beyond float resolution are fine.
    """
    prim = _AxisPrimitive(profile)
    out = np.zeros(len(tiles), dtype=complex)
    for i, t in enumerate(tiles):
        s, x0, c = t.I.side, t.I.center, t.Xi.center
        root = float(s) ** 0.5
        total = 0j
        for b in boxes:
            v = 1 + 0j
            for k in range(profile.d):
                g = prim.values(c[k] * s, [(b.lo[k] - x0[k]) / s, (b.hi[k] - x0[k]) / s])
                v *= root * (g[1] - g[0])
            total += v
        out[i] = total
    return out


def cellset_coefficients(tiles: Sequence[Tile], mask: np.ndarray, lo: Sequence, h, profile: FrameProfile) -> np.ndarray:
    """<1_E | phi_R> for E a union of cells lo + h (c + [0,1)^d) flagged in mask.

    Per tile the axis integrals over every cell row are differences of G along
    an arithmetic progression; the set enters through one tensor contraction.
    """
    mask = np.asarray(mask, dtype=float)
    d = profile.d
    if mask.ndim != d:
        raise GridMismatch("mask dimension differs from the profile dimension")
    lo = [Fraction(x) for x in lo]
    h = Fraction(h)
    prim = _AxisPrimitive(profile)
    out = np.zeros(len(tiles), dtype=complex)
    if not tiles or not mask.any():
        return out
    J = [np.empty((len(tiles), mask.shape[k]), dtype=complex) for k in range(d)]
    for i, t in enumerate(tiles):
        s, x0, c = t.I.side, t.I.center, t.Xi.center
        root = float(s) ** 0.5
        for k in range(d):
            g = prim.progression(c[k] * s, (lo[k] - x0[k]) / s, h / s, mask.shape[k] + 1)
            J[k][i] = root * np.diff(g)
    T = np.broadcast_to(mask, (len(tiles),) + mask.shape).astype(complex)
    for k in range(d):
        # contract the leading spatial axis (always axis 1 after earlier contractions)
        T = np.einsum("ta...,ta->t...", T, J[k])
    return T
