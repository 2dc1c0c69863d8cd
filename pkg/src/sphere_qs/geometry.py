"""Icosphere meshes, vertex fields and the discrete Poisson bracket.

The area form is the round one divided by ``4*pi`` so the sphere has total
area 1.  With that normalisation the Hamiltonian vector field and the
bracket both carry a single factor of ``4*pi``::

    sgrad G(p) = 4*pi * (grad G(p) x p)
    {F, G}(p)  = 4*pi * <p, grad F(p) x grad G(p)>

so that ``{F, G} = dF(sgrad G)`` and ``{x, y} = 4*pi*z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from .errors import EvaluationError, MeshError

FOUR_PI = 4.0 * np.pi
MAX_LEVEL = 9
_DEGENERATE_AREA = 1e-14


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return verts / np.linalg.norm(verts, axis=1, keepdims=True), faces


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # New vertices are appended, so coarse vertices keep their indices.
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    mid = verts[uniq[:, 0]] + verts[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    n_old = len(verts)
    nf = len(faces)
    m01 = n_old + inverse[:nf]
    m12 = n_old + inverse[nf:2 * nf]
    m20 = n_old + inverse[2 * nf:]
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([b, m12, m01], axis=1),
            np.stack([c, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.vstack([verts, mid]), new_faces


def spherical_triangle_areas(verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Spherical excess of each triangle via l'Huilier's formula (unnormalised)."""
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]

    def arc(u, v):
        return np.arctan2(np.linalg.norm(np.cross(u, v), axis=1), np.einsum("ij,ij->i", u, v))

    la, lb, lc = arc(b, c), arc(c, a), arc(a, b)
    s = 0.5 * (la + lb + lc)
    prod = np.tan(s / 2) * np.tan((s - la) / 2) * np.tan((s - lb) / 2) * np.tan((s - lc) / 2)
    return 4.0 * np.arctan(np.sqrt(np.clip(prod, 0.0, None)))


@dataclass(frozen=True, eq=False)
class SphereMesh:
    """Triangulated unit sphere with normalised (total 1) area weights."""

    vertices: np.ndarray
    triangles: np.ndarray
    triangle_areas: np.ndarray
    vertex_weights: np.ndarray
    subdivision_level: int

    def __post_init__(self):
        for name in ("vertices", "triangles", "triangle_areas", "vertex_weights"):
            _readonly(getattr(self, name))

    def __repr__(self):
        return f"SphereMesh(level={self.subdivision_level}, V={self.n_vertices}, F={self.n_triangles})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (E, 2)."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return _readonly(np.unique(e, axis=0))

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_triangles

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR neighbour lists ``(indptr, indices)`` of the vertex graph."""
        e = self.edges
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n_vertices), out=indptr[1:])
        return _readonly(indptr), _readonly(dst.astype(np.int64))

    @cached_property
    def triangle_neighbors(self) -> np.ndarray:
        """``nbr[t, k]`` is the triangle sharing the edge opposite corner ``k`` of ``t``."""
        t = self.triangles
        nf = len(t)
        opp = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        opp.sort(axis=1)
        key = opp[:, 0] * self.n_vertices + opp[:, 1]
        owner = np.tile(np.arange(nf), 3)
        corner = np.repeat(np.arange(3), nf)
        order = np.argsort(key, kind="stable")
        ks = key[order]
        if np.any(ks[0::2] != ks[1::2]):
            raise MeshError("mesh is not a closed manifold: an edge is not shared by exactly two triangles")
        nbr = np.empty((nf, 3), dtype=np.int64)
        first, second = order[0::2], order[1::2]
        nbr[owner[first], corner[first]] = owner[second]
        nbr[owner[second], corner[second]] = owner[first]
        return _readonly(nbr)

    @cached_property
    def vertex_triangle(self) -> np.ndarray:
        """One incident triangle for every vertex."""
        vt = np.empty(self.n_vertices, dtype=np.int64)
        vt[self.triangles.reshape(-1)] = np.repeat(np.arange(self.n_triangles), 3)
        return _readonly(vt)

    @cached_property
    def _flat_gradient_operators(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        t = self.triangles
        a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        normal = np.cross(b - a, c - a)
        area2 = np.linalg.norm(normal, axis=1)
        if np.any(area2 < 2 * _DEGENERATE_AREA):
            bad = int(np.argmin(area2))
            raise MeshError(f"degenerate triangle {bad} (flat area {area2[bad] / 2:.3e})")
        nhat = normal / area2[:, None]
        # Gradient of the linear interpolant: sum_k f_k * (n x e_k) / (2A), e_k opposite corner k.
        ops = np.stack([np.cross(nhat, c - b), np.cross(nhat, a - c), np.cross(nhat, b - a)], axis=1)
        ops /= area2[:, None, None]
        return _readonly(ops), _readonly(area2 / 2)

    def validate(self) -> None:
        """Check the mesh invariants; raises :class:`MeshError` on failure."""
        norms = np.linalg.norm(self.vertices, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise MeshError("vertices are not on the unit sphere")
        if abs(self.triangle_areas.sum() - 1.0) > 1e-10:
            raise MeshError(f"triangle areas sum to {self.triangle_areas.sum():.15g}, expected 1")
        if abs(self.vertex_weights.sum() - 1.0) > 1e-10:
            raise MeshError(f"vertex weights sum to {self.vertex_weights.sum():.15g}, expected 1")
        if np.any(self.triangle_areas < 0) or np.any(self.vertex_weights < 0):
            raise MeshError("negative area or weight")
        if self.euler_characteristic != 2:
            raise MeshError(f"Euler characteristic {self.euler_characteristic} != 2")


def mesh_from_arrays(vertices, triangles, level: int = -1) -> SphereMesh:
    """Build a :class:`SphereMesh` from raw arrays, computing areas and weights."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    a, b, c = vertices[triangles[:, 0]], vertices[triangles[:, 1]], vertices[triangles[:, 2]]
    orient = np.einsum("ij,ij->i", a, np.cross(b, c))
    flip = orient < 0
    if np.any(flip):
        triangles = triangles.copy()
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
    areas = spherical_triangle_areas(vertices, triangles) / FOUR_PI
    weights = np.bincount(triangles.reshape(-1), weights=np.repeat(areas / 3.0, 3),
                          minlength=len(vertices))
    return SphereMesh(vertices, triangles, areas, weights, level)


@lru_cache(maxsize=8)
def build_icosphere(subdivision_level: int) -> SphereMesh:
    """Icosahedron subdivided ``subdivision_level`` times and projected to the sphere.

    Vertices of coarser levels keep their indices, so the first
    ``10 * 4**k + 2`` vertices of a level-``n`` mesh are exactly the level-``k``
    vertices for ``k <= n``.
    """
    if not isinstance(subdivision_level, (int, np.integer)) or isinstance(subdivision_level, bool):
        raise ValueError(f"subdivision level must be an integer, got {subdivision_level!r}")
    if not 0 <= subdivision_level <= MAX_LEVEL:
        raise ValueError(f"subdivision level must be in [0, {MAX_LEVEL}], got {subdivision_level}")
    verts, faces = _icosahedron()
    for _ in range(subdivision_level):
        verts, faces = _subdivide(verts, faces)
    return mesh_from_arrays(verts, faces, int(subdivision_level))


def _same_mesh(a: SphereMesh, b: SphereMesh) -> bool:
    if a is b:
        return True
    return (a.n_vertices == b.n_vertices and a.n_triangles == b.n_triangles
            and np.array_equal(a.triangles, b.triangles) and np.array_equal(a.vertices, b.vertices))


def check_same_mesh(*fields) -> SphereMesh:
    mesh = fields[0].mesh
    for f in fields[1:]:
        if not _same_mesh(mesh, f.mesh):
            raise ValueError("fields live on different meshes")
    return mesh


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real value per mesh vertex."""

    mesh: SphereMesh
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("field has non-finite values", int(np.flatnonzero(~np.isfinite(vals))[0]))
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def constant(cls, mesh: SphereMesh, c: float) -> "ScalarField":
        return cls(mesh, np.full(mesh.n_vertices, float(c)))

    def _combine(self, other, op):
        if isinstance(other, ScalarField):
            check_same_mesh(self, other)
            return ScalarField(self.mesh, op(self.values, other.values))
        return ScalarField(self.mesh, op(self.values, float(other)))

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return ScalarField(self.mesh, float(other) - self.values)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._combine(other, np.divide)

    def __neg__(self):
        return ScalarField(self.mesh, -self.values)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        """Pointwise composition ``fn o F``."""
        return ScalarField(self.mesh, fn(self.values))

    @cached_property
    def gradient(self) -> "VectorField":
        return ambient_gradient(self)


@dataclass(frozen=True, eq=False)
class VectorField:
    """One tangent 3-vector per mesh vertex."""

    mesh: SphereMesh
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=float)
        if vec.shape != (self.mesh.n_vertices, 3):
            raise ValueError(f"expected shape ({self.mesh.n_vertices}, 3), got {vec.shape}")
        object.__setattr__(self, "vectors", _readonly(vec))

    def tangency_defect(self) -> float:
        return float(np.max(np.abs(np.einsum("ij,ij->i", self.vectors, self.mesh.vertices)), initial=0.0))

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)


def sample_field(mesh: SphereMesh, f: Callable) -> ScalarField:
    """Evaluate ``f`` at the mesh vertices.

    ``f`` is called once with three coordinate arrays ``(x, y, z)``.  A scalar
    return value is broadcast to every vertex.
    """
    v = mesh.vertices
    with np.errstate(all="ignore"):
        vals = f(v[:, 0], v[:, 1], v[:, 2])
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (mesh.n_vertices,)).copy()
    bad = np.flatnonzero(~np.isfinite(vals))
    if len(bad):
        i = int(bad[0])
        raise EvaluationError(f"non-finite value {vals[i]} at vertex {i} {tuple(v[i])}", i)
    return ScalarField(mesh, vals)


def mean_value(F: ScalarField) -> float:
    """Integral of ``F`` against the normalised area form."""
    return float(np.dot(F.values, F.mesh.vertex_weights))


def uniform_norm(F: ScalarField) -> float:
    return float(np.max(np.abs(F.values)))


def oscillation(F: ScalarField) -> float:
    return float(np.max(F.values) - np.min(F.values))


def triangle_gradients(F: ScalarField) -> np.ndarray:
    """Gradient of the piecewise-linear interpolant on each flat triangle, shape ``(F, 3)``."""
    ops, _ = F.mesh._flat_gradient_operators
    f = F.values[F.mesh.triangles]
    # differences make constants exact
    return ops[:, 1] * (f[:, 1] - f[:, 0])[:, None] + ops[:, 2] * (f[:, 2] - f[:, 0])[:, None]


def ambient_gradient(F: ScalarField) -> VectorField:
    """Tangential gradient at the vertices.

    Per-triangle gradients of the piecewise-linear interpolant are averaged
    to the vertices with the triangle areas as weights and projected onto
    the tangent planes.
    """
    mesh = F.mesh
    tri = mesh.triangles
    g_tri = triangle_gradients(F)
    w = mesh.triangle_areas
    acc = np.zeros((mesh.n_vertices, 3))
    flat_idx = tri.reshape(-1)
    wg = np.repeat(g_tri * w[:, None], 3, axis=0)
    for d in range(3):
        acc[:, d] = np.bincount(flat_idx, weights=wg[:, d], minlength=mesh.n_vertices)
    acc /= (3.0 * mesh.vertex_weights)[:, None]
    p = mesh.vertices
    acc -= np.einsum("ij,ij->i", acc, p)[:, None] * p
    return VectorField(mesh, acc)


def hamiltonian_vector_field(G: ScalarField) -> VectorField:
    """``sgrad G = 4*pi * (grad G x p)``, the field with ``{F, G} = dF(sgrad G)``."""
    return VectorField(G.mesh, FOUR_PI * np.cross(G.gradient.vectors, G.mesh.vertices))


def poisson_bracket(F: ScalarField, G: ScalarField) -> ScalarField:
    """``{F, G}(p) = 4*pi * <p, grad F x grad G>``."""
    mesh = check_same_mesh(F, G)
    cr = np.cross(F.gradient.vectors, G.gradient.vectors)
    return ScalarField(mesh, FOUR_PI * np.einsum("ij,ij->i", mesh.vertices, cr))


def bracket_norm(F: ScalarField, G: ScalarField) -> float:
    return uniform_norm(poisson_bracket(F, G))
