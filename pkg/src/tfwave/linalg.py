"""Exact rank and kernel computations over the rationals."""
from __future__ import annotations

from fractions import Fraction
from math import lcm
from typing import Sequence


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(x)


def integer_rows(rows: Sequence[Sequence]) -> list[list[int]]:
    """Scale each row by the lcm of its denominators.

    Row scaling does not change the rank or the kernel.
    """
    out = []
    for row in rows:
        fr = [to_fraction(v) for v in row]
        den = 1
        for v in fr:
            den = lcm(den, v.denominator)
        out.append([int(v * den) for v in fr])
    return out


def bareiss_rank(matrix: Sequence[Sequence[int]]) -> int:
    """Rank of an integer matrix by fraction-free elimination."""
    a = [list(r) for r in matrix]
    if not a:
        return 0
    nrows, ncols = len(a), len(a[0])
    rank = 0
    prev = 1
    for col in range(ncols):
        if rank == nrows:
            break
        piv = None
        for r in range(rank, nrows):
            if a[r][col] != 0:
                piv = r
                break
        if piv is None:
            continue
        a[rank], a[piv] = a[piv], a[rank]
        p = a[rank][col]
        for r in range(rank + 1, nrows):
            arc = a[r][col]
            row_r = a[r]
            row_p = a[rank]
            for c in range(col + 1, ncols):
                row_r[c] = (p * row_r[c] - arc * row_p[c]) // prev
            row_r[col] = 0
        prev = p
        rank += 1
    return rank


def rank(matrix: Sequence[Sequence]) -> int:
    if not matrix or not len(matrix[0]):
        return 0
    return bareiss_rank(integer_rows(matrix))


def rref(matrix: Sequence[Sequence]) -> tuple[list[list[Fraction]], list[int]]:
    a = [[to_fraction(v) for v in row] for row in matrix]
    if not a:
        return a, []
    nrows, ncols = len(a), len(a[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, nrows) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [v * inv for v in a[r]]
        for i in range(nrows):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [vi - f * vr for vi, vr in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return a, pivots


def nullspace(matrix: Sequence[Sequence], ncols: int | None = None) -> list[list[Fraction]]:
    """Basis of the right kernel, one vector per free column."""
    if not matrix:
        n = ncols or 0
        return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    n = len(matrix[0])
    red, pivots = rref(matrix)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * n
        v[f] = Fraction(1)
        for row, pc in zip(red, pivots):
            v[pc] = -row[f]
        basis.append(v)
    return basis


def matvec(matrix: Sequence[Sequence], v: Sequence) -> list[Fraction]:
    return [sum((to_fraction(a) * to_fraction(b) for a, b in zip(row, v)), Fraction(0)) for row in matrix]


def transpose(matrix: Sequence[Sequence]) -> list[list]:
    return [list(col) for col in zip(*matrix)]
