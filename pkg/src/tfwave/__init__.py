"""Discrete time-frequency models for multilinear forms singular along a subspace."""
from .catalog import by_name
from .config import DEFAULT, Config, load_config
from .estimators import ForestDecomposer, WavePacketTransform
from .geometry import Box, DyadicCube, ShiftedDyadicCube, Tile, VectorTile
from .gridfn import GridFunction
from .subspace import Subspace, check_type1, check_type2, verdict

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Config",
    "DEFAULT",
    "DyadicCube",
    "ForestDecomposer",
    "GridFunction",
    "ShiftedDyadicCube",
    "Subspace",
    "Tile",
    "VectorTile",
    "WavePacketTransform",
    "by_name",
    "check_type1",
    "check_type2",
    "load_config",
    "verdict",
]
