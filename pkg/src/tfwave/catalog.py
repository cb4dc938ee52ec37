"""Named singular subspaces used throughout the tests and experiments."""
from __future__ import annotations

from fractions import Fraction as F

from .subspace import Subspace


def bilinear_hilbert() -> Subspace:
    """n=3, d=1, m=1: span{(1, 1, -2)}."""
    return Subspace.from_blocks([[[1], [1], [-2]]])


def fractional_rank_nondegenerate() -> Subspace:
    """n=4, d=2, m=3, from the maps t -> (t2, t3), (t3, 2 t1), (t1, 3 t2)."""
    return Subspace.from_blocks(
        [
            [[1, 0], [0, 0], [0, F(-1, 3)], [-1, F(1, 3)]],
            [[0, 1], [-1, 0], [0, 0], [1, -1]],
            [[0, 0], [0, 1], [-2, 0], [2, -1]],
        ]
    )


def fractional_rank_nondegenerate_maps():
    return [
        [[0, 1, 0], [0, 0, 1]],
        [[0, 0, 1], [2, 0, 0]],
        [[1, 0, 0], [0, 3, 0]],
    ]


def mildly_degenerate() -> Subspace:
    """n=4, d=2, m=3, from the maps t -> (t2, t3), (t3, t1), (t1, t2)."""
    return Subspace.from_blocks(
        [
            [[1, 0], [0, 0], [0, -1], [-1, 1]],
            [[0, 1], [-1, 0], [0, 0], [1, -1]],
            [[0, 0], [0, 1], [-1, 0], [1, -1]],
        ]
    )


def mildly_degenerate_maps():
    return [
        [[0, 1, 0], [0, 0, 1]],
        [[0, 0, 1], [1, 0, 0]],
        [[1, 0, 0], [0, 1, 0]],
    ]


def triangular_hilbert() -> Subspace:
    """n=3, d=2, m=3: rank exactly n/2, outside every check."""
    return Subspace.from_kernel_maps([[[0], [1]], [[1], [0]]], d=2)


def large_rank_small_n() -> Subspace:
    """n=3, d=3, m=4: xi_{1,2} + xi_{2,1} = 0 and xi_{1,3} + xi_{2,2} = 0."""
    return Subspace.from_kernel_maps(
        [
            [[0, 0], [1, 0], [0, 1]],
            [[1, 0], [0, 1], [0, 0]],
        ],
        d=3,
    )


NAMED = {
    "bht": bilinear_hilbert,
    "fractional": fractional_rank_nondegenerate,
    "mild": mildly_degenerate,
    "tht": triangular_hilbert,
    "smalln": large_rank_small_n,
}


def by_name(name: str) -> Subspace:
    try:
        return NAMED[name]()
    except KeyError:
        raise ValueError(f"unknown subspace {name!r}; choose from {sorted(NAMED)}") from None
