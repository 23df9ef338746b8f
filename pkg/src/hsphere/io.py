"""Plain-text state files, JSON reports and CSV traces."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, MeshMismatch
from .mesh import DomainMesh

STATE_HEADER = "# hsphere-state v1"


@dataclass
class StateFile:
    vertices: np.ndarray
    values: np.ndarray
    subdivisions: int | None
    triangles_hash: str | None = None

    @property
    def ambient_dim(self) -> int:
        return self.values.shape[1]


def _fmt(x: float) -> str:
    # 17 significant digits round-trip every double exactly
    return "%.17g" % x


def _triangles_digest(tris) -> str:
    return hashlib.sha256(np.ascontiguousarray(tris, dtype=np.int64).tobytes()).hexdigest()[:16]


def save_state(path, mesh: DomainMesh, u) -> Path:
    """Columns: x y z (domain vertex) then the K map coordinates, one row per vertex."""
    u = np.asarray(u, float)
    if u.ndim != 2 or u.shape[0] != mesh.n_vertices:
        raise MeshMismatch(f"state has shape {u.shape}, mesh has {mesh.n_vertices} vertices")
    path = Path(path)
    lines = [
        STATE_HEADER,
        f"# subdivisions {'none' if mesh.subdivisions is None else mesh.subdivisions}",
        f"# vertices {mesh.n_vertices}",
        f"# ambient_dim {u.shape[1]}",
        f"# triangles {_triangles_digest(mesh.triangles)}",
    ]
    for x, row in zip(mesh.vertices, u):
        lines.append(" ".join(_fmt(v) for v in x) + " " + " ".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_state(path) -> StateFile:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != STATE_HEADER:
        raise FormatError(f"{path}: missing or unknown header (expected {STATE_HEADER!r})")
    meta = {}
    body = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            parts = ln[1:].split()
            if len(parts) != 2:
                raise FormatError(f"{path}: malformed header line {ln!r}")
            meta[parts[0]] = parts[1]
        elif ln.strip():
            body.append(ln)
    for key in ("subdivisions", "vertices", "ambient_dim"):
        if key not in meta:
            raise FormatError(f"{path}: header field {key!r} missing")
    try:
        nv, K = int(meta["vertices"]), int(meta["ambient_dim"])
        sub = None if meta["subdivisions"] == "none" else int(meta["subdivisions"])
        data = np.array([[float(v) for v in ln.split()] for ln in body], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.shape != (nv, 3 + K):
        raise FormatError(f"{path}: expected {nv} rows of {3 + K} columns, got {data.shape}")
    return StateFile(data[:, :3].copy(), data[:, 3:].copy(), sub, meta.get("triangles"))


def load_state(path, mesh: DomainMesh) -> np.ndarray:
    """Read a state file and check it belongs to ``mesh`` (same vertices, bit for bit)."""
    sf = read_state(path)
    if sf.subdivisions != mesh.subdivisions or len(sf.vertices) != mesh.n_vertices:
        raise MeshMismatch(
            f"state is for subdivisions={sf.subdivisions} ({len(sf.vertices)} vertices), "
            f"mesh has subdivisions={mesh.subdivisions} ({mesh.n_vertices} vertices)"
        )
    if not np.array_equal(sf.vertices, mesh.vertices):
        raise MeshMismatch("state vertex positions differ from the mesh (different rotation or jitter?)")
    if sf.triangles_hash is not None and sf.triangles_hash != _triangles_digest(mesh.triangles):
        raise MeshMismatch("state triangulation differs from the mesh")
    return sf.values


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=False) + "\n")
    return path


def write_csv(path, rows, columns=None) -> Path:
    """Rows are dicts (columns inferred from the first) or sequences with ``columns`` given."""
    path = Path(path)
    rows = list(rows)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if rows and isinstance(rows[0], dict):
            columns = list(rows[0]) if columns is None else columns
            w.writerow(columns)
            for r in rows:
                w.writerow([_cell(r.get(c)) for c in columns])
        else:
            if columns is not None:
                w.writerow(columns)
            for r in rows:
                w.writerow([_cell(v) for v in r])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
