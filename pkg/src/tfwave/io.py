"""File formats: JSON for cubes, tiles and collections, CSV for row reports,
little-endian binary for grid functions."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .geometry import DyadicCube, ShiftedDyadicCube, Tile, VectorTile
from .gridfn import GridFunction


def cube_from_json(data: Mapping) -> DyadicCube:
    return DyadicCube(int(data["level"]), tuple(int(c) for c in data["corner"]))


def tile_to_json(t: Tile) -> dict:
    return {"I": t.I.to_json(), "Xi": t.Xi.to_json()}


def tile_from_json(data: Mapping) -> Tile:
    return Tile(cube_from_json(data["I"]), ShiftedDyadicCube.from_json(data["Xi"]))


def vector_tile_to_json(R: VectorTile) -> dict:
    return {"I": R.I.to_json(), "Xi": [x.to_json() for x in R.Xis]}


def vector_tile_from_json(data: Mapping) -> VectorTile:
    return VectorTile(cube_from_json(data["I"]), tuple(ShiftedDyadicCube.from_json(x) for x in data["Xi"]))


def collection_to_json(col) -> dict:
    return {
        "gamma": col.gamma.to_json(),
        "domain": {"lo": [str(x) for x in col.domain.lo], "hi": [str(x) for x in col.domain.hi]},
        "hypotheses": col.hypotheses,
        "frequencies": [[x.to_json() for x in f] for f in col.frequencies],
        "tiles": [vector_tile_to_json(R) for R in col.tiles],
        "meta": {k: v for k, v in col.meta.items() if k != "whitney"},
    }


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, default=str))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_rows(path, rows: Sequence[Mapping], fields: Iterable[str] | None = None) -> Path:
    """CSV with the union of row keys as header, in first-seen order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fields is None:
        fields = []
        for r in rows:
            fields.extend(k for k in r if k not in fields)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields))
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def save_grid(path, f: GridFunction) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f.to_bytes())
    return path


def load_grid(path) -> GridFunction:
    return GridFunction.from_bytes(Path(path).read_bytes())
