"""scikit-learn style wrappers around the wave packet frame and the forest decomposition."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import DEFAULT, Config
from .gridfn import GridFunction
from .trees import TileOrder, forest_decompose
from .wavepackets import FrameProfile, frame_tiles, synthesize, tile_coefficients


def _as_list(X) -> list[GridFunction]:
    if isinstance(X, GridFunction):
        return [X]
    X = list(X)
    if not all(isinstance(f, GridFunction) for f in X):
        raise TypeError("expected GridFunction samples")
    return X


class WavePacketTransform(TransformerMixin, BaseEstimator):
    """Coefficients <f | phi_R> over all tiles of one frequency scale.

    ``fit`` fixes the grid and the tile set from the first sample; ``transform``
    maps samples on that grid to rows of coefficients and ``inverse_transform``
    synthesizes grid functions back from them.
    """

    def __init__(self, scale: int = 0, radius: float = 0.24, margin: int = 4):
        self.scale = scale
        self.radius = radius
        self.margin = margin

    def fit(self, X, y=None):
        X = _as_list(X)
        if not X:
            raise ValueError("need at least one sample")
        g = X[0]
        self.grid_ = g.with_values(np.zeros_like(g.values))
        self.profile_ = FrameProfile(g.d, self.radius)
        self.tiles_ = frame_tiles(g, self.scale, self.margin)
        self.n_features_out_ = len(self.tiles_)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "tiles_")
        X = _as_list(X)
        for f in X:
            self.grid_.check_grid(f)
        return np.stack([tile_coefficients(f, self.tiles_, self.profile_) for f in X])

    def inverse_transform(self, C) -> list[GridFunction]:
        check_is_fitted(self, "tiles_")
        C = np.atleast_2d(np.asarray(C, dtype=complex))
        if C.shape[1] != len(self.tiles_):
            raise ValueError(f"expected {len(self.tiles_)} coefficients per row, got {C.shape[1]}")
        return [synthesize(self.grid_, self.tiles_, row, self.profile_) for row in C]


class ForestDecomposer(BaseEstimator):
    """Dyadic-level forest decomposition of a weighted tile family.

    ``fit(tiles, coefficients)`` takes the tiles and a matching sequence (or
    tile -> coefficient mapping). After fitting, ``levels_`` lists the mass
    levels, ``forests_`` maps each level to its forest and ``decomposition_``
    keeps the full result.
    """

    def __init__(self, C1: int = DEFAULT.C1, C2: int = DEFAULT.C2, C3: int = DEFAULT.C3, c_d: float = DEFAULT.c_d, j: int = 1):
        self.C1 = C1
        self.C2 = C2
        self.C3 = C3
        self.c_d = c_d
        self.j = j

    def _config(self) -> Config:
        return Config(C1=self.C1, C2=self.C2, C3=self.C3, c_d=self.c_d)

    def fit(self, tiles: Sequence, coefficients=None):
        tiles = list(tiles)
        if coefficients is None:
            raise ValueError("coefficients are required")
        if isinstance(coefficients, dict):
            coefficients = [coefficients[t] for t in tiles]
        coefficients = np.asarray(coefficients, dtype=complex)
        if len(coefficients) != len(tiles):
            raise ValueError("one coefficient per tile")
        self.order_ = TileOrder(tiles, self._config())
        self.decomposition_ = forest_decompose(tiles, coefficients, self.order_, self.c_d, self.j)
        self.forests_ = self.decomposition_.forests()
        self.levels_ = sorted(self.forests_, reverse=True)
        self.initial_mass_ = self.decomposition_.initial_mass
        return self

    def strongly_disjoint(self) -> bool:
        check_is_fitted(self, "forests_")
        return all(f.strongly_disjoint is not False for f in self.forests_.values())

    def tree_count(self) -> int:
        check_is_fitted(self, "forests_")
        return sum(len(f.trees) for f in self.forests_.values()) + len(self.decomposition_.zero_trees)
