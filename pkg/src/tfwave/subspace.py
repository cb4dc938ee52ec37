"""Singular subspaces Gamma inside Gamma_0 and their non-degeneracy checks.

Index sets (A, B, the coordinate j of a kernel query) are 1-based, matching
the usual labelling of the n input functions. Everything here is exact.
"""
from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import ceil, lcm
from typing import Iterator, Sequence

from .errors import (
    InvalidFamily,
    NegativeBlockSize,
    OddMediumRank,
    RankOutOfRange,
)
from .linalg import bareiss_rank, matvec, nullspace, rank, to_fraction


@dataclass(frozen=True)
class Subspace:
    """span{v_1..v_m} inside (Q^d)^n; each vector stored as a flat tuple of n*d rationals."""

    n: int
    d: int
    m: int
    basis: tuple[tuple[Fraction, ...], ...]
    _int_basis: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 2 or self.d < 1 or self.m < 1:
            raise ValueError("need n >= 2, d >= 1, m >= 1")
        if len(self.basis) != self.m:
            raise ValueError(f"expected {self.m} basis vectors, got {len(self.basis)}")
        basis = tuple(tuple(to_fraction(x) for x in v) for v in self.basis)
        for v in basis:
            if len(v) != self.n * self.d:
                raise ValueError("basis vector has wrong length")
            for k in range(self.d):
                if sum(v[j * self.d + k] for j in range(self.n)) != 0:
                    raise ValueError("basis vector is not in Gamma_0 (blocks must sum to zero)")
        object.__setattr__(self, "basis", basis)
        if rank(basis) != self.m:
            raise ValueError("basis vectors are linearly dependent")
        ints = []
        for v in basis:
            den = 1
            for x in v:
                den = lcm(den, x.denominator)
            ints.append(tuple(int(x * den) for x in v))
        object.__setattr__(self, "_int_basis", tuple(ints))

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[Sequence]]) -> "Subspace":
        """Build from m vectors given as n blocks of d entries each."""
        m = len(blocks)
        n = len(blocks[0])
        d = len(blocks[0][0])
        flat = [tuple(to_fraction(x) for blk in v for x in blk) for v in blocks]
        return cls(n, d, m, tuple(flat))

    @classmethod
    def from_kernel_maps(cls, maps: Sequence[Sequence[Sequence]], d: int) -> "Subspace":
        """Gamma = {xi in Gamma_0 : sum_{j<n} L_j^T xi_j = 0}.

        ``maps[j]`` is a d x k matrix L_j (rows indexed by the d coordinates of xi_j).
        """
        n = len(maps) + 1
        k = len(maps[0][0])
        rows = []
        for c in range(d):
            row = [Fraction(0)] * (n * d)
            for j in range(n):
                row[j * d + c] = Fraction(1)
            rows.append(row)
        for t in range(k):
            row = [Fraction(0)] * (n * d)
            for j, L in enumerate(maps):
                for c in range(d):
                    row[j * d + c] = to_fraction(L[c][t])
            rows.append(row)
        ker = nullspace(rows)
        return cls(n, d, len(ker), tuple(tuple(v) for v in ker))

    def block(self, i: int, j: int) -> tuple[Fraction, ...]:
        """Block j (1-based) of basis vector i (0-based)."""
        return self.basis[i][(j - 1) * self.d : j * self.d]

    def vector(self, t: Sequence) -> tuple[Fraction, ...]:
        """Ambient vector sum_i t_i v_i."""
        t = [to_fraction(x) for x in t]
        return tuple(sum((t[i] * self.basis[i][c] for i in range(self.m)), Fraction(0)) for c in range(self.n * self.d))

    def contains(self, vec: Sequence) -> bool:
        vec = [to_fraction(x) for x in vec]
        return rank(list(self.basis) + [vec]) == self.m

    def same_span(self, other: "Subspace") -> bool:
        return (self.n, self.d, self.m) == (other.n, other.d, other.m) and rank(list(self.basis) + list(other.basis)) == self.m

    def projection_basis(self, indices: Sequence[int]) -> list[tuple[Fraction, ...]]:
        """Basis vectors restricted to the blocks in ``indices`` (1-based)."""
        cols = [(j - 1) * self.d + c for j in indices for c in range(self.d)]
        return [tuple(v[c] for c in cols) for v in self.basis]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "m": self.m,
            "basis": [[[str(self.basis[i][j * self.d + c]) for c in range(self.d)] for j in range(self.n)] for i in range(self.m)],
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "Subspace":
        if isinstance(data, str):
            data = json.loads(data)
        sub = cls.from_blocks(data["basis"])
        if (sub.n, sub.d, sub.m) != (data["n"], data["d"], data["m"]):
            raise ValueError("declared (n, d, m) does not match the basis")
        return sub


@dataclass(frozen=True)
class RankParams:
    l: int
    r: int
    a: int
    b: int
    excess: int

    @property
    def negative(self) -> bool:
        return self.excess < 0


def rank_params(m: int, d: int) -> RankParams:
    if m < 1 or d < 1:
        raise ValueError("m, d >= 1")
    l, r = divmod(m, d)
    e = l + 1 - (d - r)
    a, b = divmod(e, d) if e >= 0 else (0, 0)
    return RankParams(l, r, a, b, e)


def projection_image_dim(gamma: Subspace, theta: Sequence[tuple[int, int]]) -> int:
    """Rank of the projection onto coordinates (j, k), both 1-based."""
    if not theta:
        raise ValueError("theta must be nonempty")
    cols = [(j - 1) * gamma.d + (k - 1) for j, k in theta]
    return bareiss_rank([[v[c] for c in cols] for v in gamma._int_basis])


def _block_rank(gamma: Subspace, indices: Sequence[int]) -> int:
    cols = [(j - 1) * gamma.d + c for j in indices for c in range(gamma.d)]
    return bareiss_rank([[v[c] for c in cols] for v in gamma._int_basis])


# -- Type I ------------------------------------------------------------------


@dataclass
class Type1Result:
    holds: bool
    failing_A: tuple[int, ...] | None = None


def check_type1(gamma: Subspace) -> Type1Result:
    n, d, m = gamma.n, gamma.d, gamma.m
    if Fraction(m, d) >= Fraction(n, 2):
        raise RankOutOfRange(f"Type I needs m/d < n/2, got m/d={Fraction(m, d)}, n/2={Fraction(n, 2)}")
    size = ceil(Fraction(m, d))
    for A in combinations(range(1, n + 1), size):
        if _block_rank(gamma, A) != m:
            return Type1Result(False, A)
    return Type1Result(True)


# -- Type II -----------------------------------------------------------------


@dataclass(frozen=True)
class IndexFamily:
    A: tuple[int, ...]
    B: tuple[tuple[int, ...], ...]
    U: tuple[tuple[int, ...], ...] | None = None
    W: tuple[int, ...] | None = None

    @property
    def L(self) -> int:
        return len(self.B)

    @classmethod
    def medium(cls, A, B1, B2) -> "IndexFamily":
        return cls(tuple(sorted(A)), (tuple(sorted(B1)), tuple(sorted(B2))))

    @classmethod
    def large(cls, A, U, W, d: int) -> "IndexFamily":
        U = tuple(tuple(sorted(u)) for u in U)
        W = tuple(sorted(W))
        if len(U) != 2 * d - 1:
            raise InvalidFamily(f"need {2 * d - 1} U blocks, got {len(U)}")
        B = tuple(tuple(sorted(set().union(*U[k : k + d]) | set(W))) for k in range(d))
        return cls(tuple(sorted(A)), B, U, W)

    def to_json(self) -> dict:
        out = {"A": list(self.A), "B": [list(b) for b in self.B]}
        if self.U is not None:
            out["U"] = [list(u) for u in self.U]
            out["W"] = list(self.W)
        return out


def type2_case(n: int, d: int, m: int) -> str:
    """'medium' (L=2) or 'large' (L=d) rank case."""
    q = Fraction(m, d)
    if not (q < Fraction(n, 2) <= ceil(q)):
        raise RankOutOfRange(f"Type II needs m/d < n/2 <= ceil(m/d); got m/d={q}, n={n}")
    if q <= Fraction(n - 1, 2):
        if n % 2:
            # Unreachable for integer data, kept as a guard.
            raise OddMediumRank(f"medium-rank case needs even n, got n={n}")
        return "medium"
    return "large"


def validate_family(fam: IndexFamily, n: int, d: int, m: int) -> None:
    case = type2_case(n, d, m)
    universe = set(range(1, n + 1))
    for s in (fam.A, *fam.B):
        if not set(s) <= universe:
            raise InvalidFamily(f"indices outside [1, {n}]: {s}")
        if len(set(s)) != len(s):
            raise InvalidFamily("repeated index")
    if case == "medium":
        n2 = (n - 2) // 2
        if fam.L != 2 or len(fam.A) != 1 or any(len(b) != n2 for b in fam.B):
            raise InvalidFamily(f"medium-rank family needs #A=1 and two B blocks of size {n2}")
        if set(fam.A) & set(fam.B[0]) or set(fam.A) & set(fam.B[1]) or set(fam.B[0]) & set(fam.B[1]):
            raise InvalidFamily("A, B1, B2 must be pairwise disjoint")
        return
    rp = rank_params(m, d)
    if rp.negative:
        raise NegativeBlockSize(f"l+1-(d-r) = {rp.excess} < 0")
    if fam.U is None or fam.W is None:
        raise InvalidFamily("large-rank family needs U blocks and W")
    if fam.L != d or len(fam.A) != d - rp.r or len(fam.W) != rp.b or any(len(u) != rp.a for u in fam.U):
        raise InvalidFamily("large-rank family has wrong block sizes")
    parts = [fam.A, *fam.U, fam.W]
    seen: set[int] = set()
    for p in parts:
        if seen & set(p):
            raise InvalidFamily("A, U_k, W must be pairwise disjoint")
        seen |= set(p)
    expected = IndexFamily.large(fam.A, fam.U, fam.W, d).B
    if expected != fam.B:
        raise InvalidFamily("B blocks inconsistent with U and W")


def enumerate_families(n: int, d: int, m: int) -> Iterator[IndexFamily]:
    """All admissible families in lexicographic order."""
    case = type2_case(n, d, m)
    universe = tuple(range(1, n + 1))
    if case == "medium":
        n2 = (n - 2) // 2
        for A in combinations(universe, 1):
            rest = [i for i in universe if i not in A]
            for B1 in combinations(rest, n2):
                rest2 = [i for i in rest if i not in B1]
                for B2 in combinations(rest2, n2):
                    yield IndexFamily(A, (B1, B2))
        return
    rp = rank_params(m, d)
    if rp.negative:
        raise NegativeBlockSize(f"l+1-(d-r) = {rp.excess} < 0")
    sizes = [rp.a] * (2 * d - 1) + [rp.b]

    def blocks(avail, k):
        if k == len(sizes):
            yield ()
            return
        for blk in combinations(avail, sizes[k]):
            left = [i for i in avail if i not in blk]
            for tail in blocks(left, k + 1):
                yield (blk,) + tail

    for A in combinations(universe, d - rp.r):
        rest = [i for i in universe if i not in A]
        for parts in blocks(rest, 0):
            yield IndexFamily.large(A, parts[:-1], parts[-1], d)


def build_type2_map(gamma: Subspace, fam: IndexFamily, validate: bool = True) -> list[list[Fraction]]:
    """Matrix of the map on t-coordinates (t^(1), ..., t^(L)), each of length m.

    Rows: the P_{B^(k)} blocks for k = 1..L, then P_A(w^(1)) - P_A(w^(k)) for k = 2..L.
    """
    if validate:
        validate_family(fam, gamma.n, gamma.d, gamma.m)
    return _type2_rows(gamma.basis, gamma.d, gamma.m, fam)


def _type2_rows(basis, d: int, m: int, fam: IndexFamily) -> list[list]:
    L = fam.L
    zero = basis[0][0] * 0
    rows = []
    for k, Bk in enumerate(fam.B):
        for j in Bk:
            for c in range(d):
                row = [zero] * (L * m)
                for i in range(m):
                    row[k * m + i] = basis[i][(j - 1) * d + c]
                rows.append(row)
    for k in range(1, L):
        for j in fam.A:
            for c in range(d):
                row = [zero] * (L * m)
                for i in range(m):
                    x = basis[i][(j - 1) * d + c]
                    row[i] = x
                    row[k * m + i] = -x
                rows.append(row)
    return rows


@dataclass
class FamilyResult:
    trivial_kernel: bool
    witness: tuple[tuple[Fraction, ...], ...] | None = None


def check_family(gamma: Subspace, fam: IndexFamily, validate: bool = True) -> FamilyResult:
    if validate:
        validate_family(fam, gamma.n, gamma.d, gamma.m)
    L, m = fam.L, gamma.m
    irows = _type2_rows(gamma._int_basis, gamma.d, m, fam)
    if bareiss_rank(irows) == L * m:
        return FamilyResult(True)
    ker = nullspace(_type2_rows(gamma.basis, gamma.d, m, fam), L * m)
    w = ker[0]
    return FamilyResult(False, tuple(tuple(w[k * m : (k + 1) * m]) for k in range(L)))


def witness_is_valid(gamma: Subspace, fam: IndexFamily, witness) -> bool:
    flat = [x for part in witness for x in part]
    if all(x == 0 for x in flat):
        return False
    return all(v == 0 for v in matvec(_type2_rows(gamma.basis, gamma.d, gamma.m, fam), flat))


@dataclass
class Type2Result:
    holds: bool
    witness: tuple[tuple[Fraction, ...], ...] | None = None
    failing_family: IndexFamily | None = None
    families_checked: int = 0


def check_type2(gamma: Subspace, families: Iterator[IndexFamily] | None = None) -> Type2Result:
    if families is None:
        families = enumerate_families(gamma.n, gamma.d, gamma.m)
    count = 0
    for fam in families:
        count += 1
        res = check_family(gamma, fam, validate=False)
        if not res.trivial_kernel:
            return Type2Result(False, res.witness, fam, count)
    return Type2Result(True, None, None, count)


# -- coordinate kernels ------------------------------------------------------


@dataclass
class CoordinateKernel:
    coefficients: list[list[Fraction]]
    ambient: list[tuple[Fraction, ...]]

    @property
    def dim(self) -> int:
        return len(self.coefficients)


def coordinate_kernel(gamma: Subspace, j: int) -> CoordinateKernel:
    """Kernel of the projection onto block j, restricted to Gamma."""
    if not 1 <= j <= gamma.n:
        raise ValueError(f"j must lie in [1, {gamma.n}]")
    rows = [[gamma.basis[i][(j - 1) * gamma.d + c] for i in range(gamma.m)] for c in range(gamma.d)]
    coeffs = nullspace(rows, gamma.m)
    return CoordinateKernel(coeffs, [gamma.vector(t) for t in coeffs])


def in_span(vectors: Sequence[Sequence], v: Sequence) -> bool:
    vectors = [list(x) for x in vectors]
    if not vectors:
        return all(to_fraction(x) == 0 for x in v)
    return rank(vectors + [list(v)]) == rank(vectors)


# -- sampling and verdicts ---------------------------------------------------


def sample_generic(n: int, d: int, m: int, seed: int, magnitude: int = 10**6) -> Subspace:
    if Fraction(m, d) >= Fraction(n, 2):
        raise RankOutOfRange("sample_generic needs m/d < n/2")
    rng = random.Random(seed)
    vecs = []
    for _ in range(m):
        head = [rng.randint(-magnitude, magnitude) for _ in range((n - 1) * d)]
        tail = [-sum(head[j * d + c] for j in range(n - 1)) for c in range(d)]
        vecs.append(tuple(Fraction(x) for x in head + tail))
    return Subspace(n, d, m, tuple(vecs))


def applicable_checks(n: int, d: int, m: int) -> dict[str, bool]:
    q = Fraction(m, d)
    t1 = q < Fraction(n, 2)
    t2 = t1 and Fraction(n, 2) <= ceil(q)
    return {"type1": t1, "type2": t2}


def verdict(gamma: Subspace) -> dict:
    """Run every applicable check and return the JSON-ready verdict."""
    t0 = time.perf_counter()
    app = applicable_checks(gamma.n, gamma.d, gamma.m)
    out: dict = {"type1": None, "type2": None, "witnesses": [], "failing_family": None}
    if app["type1"]:
        r1 = check_type1(gamma)
        out["type1"] = r1.holds
        if not r1.holds:
            out["failing_A"] = list(r1.failing_A)
    if app["type2"]:
        try:
            r2 = check_type2(gamma)
        except NegativeBlockSize as exc:
            out["type2"] = False
            out["type2_reason"] = str(exc)
        else:
            out["type2"] = r2.holds
            if not r2.holds:
                out["witnesses"] = [[[str(x) for x in part] for part in r2.witness]]
                out["failing_family"] = r2.failing_family.to_json()
    out["timing_ms"] = (time.perf_counter() - t0) * 1000.0
    return out
