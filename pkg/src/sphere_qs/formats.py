"""Plain-text, CSV and JSON serialisation.

Mesh text format::

    V F level
    x y z w          (V lines: unit vertex and its quadrature weight)
    i j k area       (F lines: vertex indices and normalised area)

Contour tree text format::

    nodes N edges E
    id level kind    (N lines)
    lo hi n          (per edge, followed by n lines "level area")

Reals are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MeshError
from .geometry import SphereMesh
from .reeb import KINDS, ContourTree


def _g(v: float) -> str:
    return format(float(v), ".17g")


def format_mesh(mesh: SphereMesh) -> str:
    lines = [f"{mesh.n_vertices} {mesh.n_triangles} {mesh.subdivision_level}"]
    lines += [" ".join(map(_g, (*p, w))) for p, w in zip(mesh.vertices, mesh.vertex_weights)]
    lines += [f"{i} {j} {k} {_g(a)}" for (i, j, k), a in zip(mesh.triangles.tolist(), mesh.triangle_areas)]
    return "\n".join(lines) + "\n"


def parse_mesh(text: str) -> SphereMesh:
    """Inverse of :func:`format_mesh`; raises :class:`MeshError` on malformed input."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        nv, nf, level = map(int, rows[0])
        verts = np.array(rows[1:1 + nv], dtype=float)
        faces = np.array(rows[1 + nv:1 + nv + nf], dtype=float)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh text: {exc}") from None
    if verts.shape != (nv, 4) or faces.shape != (nf, 4) or len(rows) != 1 + nv + nf:
        raise MeshError("mesh text does not match its header")
    tris = faces[:, :3]
    if np.any(tris != np.round(tris)) or tris.min() < 0 or tris.max() >= nv:
        raise MeshError("triangle indices out of range")
    mesh = SphereMesh(np.ascontiguousarray(verts[:, :3]), tris.astype(np.int64),
                      np.ascontiguousarray(faces[:, 3]), np.ascontiguousarray(verts[:, 3]), level)
    mesh.validate()
    return mesh


def write_mesh(mesh: SphereMesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))


def read_mesh(path) -> SphereMesh:
    return parse_mesh(Path(path).read_text())


@dataclass(frozen=True)
class TreeRecord:
    """Contour tree as stored on disk: node levels and kinds, edge area profiles."""

    node_level: np.ndarray
    node_kind: tuple
    edges: np.ndarray
    profiles: tuple

    @classmethod
    def from_tree(cls, tree: ContourTree) -> "TreeRecord":
        return cls(np.asarray(tree.node_level, float), tuple(tree.kind(i) for i in range(tree.n_nodes)),
                   np.column_stack([tree.edge_lo, tree.edge_hi]).astype(np.int64),
                   tuple(np.column_stack(tree.area_profile(e)) for e in range(tree.n_edges)))


def format_tree(tree: ContourTree | TreeRecord) -> str:
    rec = tree if isinstance(tree, TreeRecord) else TreeRecord.from_tree(tree)
    lines = [f"nodes {len(rec.node_level)} edges {len(rec.edges)}"]
    lines += [f"{i} {_g(lv)} {k}" for i, (lv, k) in enumerate(zip(rec.node_level, rec.node_kind))]
    for (lo, hi), prof in zip(rec.edges.tolist(), rec.profiles):
        lines.append(f"{lo} {hi} {len(prof)}")
        lines += [f"{_g(a)} {_g(b)}" for a, b in prof]
    return "\n".join(lines) + "\n"


def parse_tree(text: str) -> TreeRecord:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        _, n, _, m = rows[0]
        n, m = int(n), int(m)
        levels = [float(r[1]) for r in rows[1:1 + n]]
        kinds = tuple(r[2] for r in rows[1:1 + n])
        pos, edges, profiles = 1 + n, [], []
        for _ in range(m):
            lo, hi, k = map(int, rows[pos])
            edges.append((lo, hi))
            profiles.append(np.array(rows[pos + 1:pos + 1 + k], dtype=float).reshape(k, 2))
            pos += 1 + k
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed tree text: {exc}") from None
    if any(k not in KINDS for k in kinds):
        raise ValueError("unknown node kind")
    return TreeRecord(np.array(levels), kinds, np.array(edges, dtype=np.int64).reshape(-1, 2), tuple(profiles))


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _text(v) -> str:
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def format_key_values(report: dict) -> str:
    """``key = value`` lines in insertion order."""
    return "".join(f"{k} = {_text(v)}\n" for k, v in report.items())


def format_csv(rows, columns=None) -> str:
    """RFC 4180 CSV with CRLF line ends; floats use their shortest round-trip form."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_text(r[c]) for c in columns])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def format_json(obj) -> str:
    """UTF-8 JSON keeping insertion order; non-finite floats become null."""

    def clean(v):
        v = _plain(v)
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, float) and not math.isfinite(v):
            return None
        return v

    return json.dumps(clean(obj), indent=2, ensure_ascii=False) + "\n"
