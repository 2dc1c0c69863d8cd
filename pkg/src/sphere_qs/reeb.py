"""Measure-augmented contour trees of vertex fields on a genus-0 mesh.

Vertices are ordered by ``(value, index)`` (simulation of simplicity), the
join and split trees are built by union-find sweeps over the vertex graph
and merged into the augmented contour tree.  Regular vertices are then
collapsed into the arcs between critical nodes; each arc keeps the levels
and area weights of the vertices it swallowed, which is the data needed to
split its area at an arbitrary level.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numba
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import TopologyError
from .geometry import ScalarField

KINDS = ("min", "max", "saddle")


@numba.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@numba.njit(cache=True)
def _sweep(order, rank, indptr, indices):
    """Join tree of the sweep in ``order``: one arc from each component head to the merging vertex."""
    n = order.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    head = np.empty(n, dtype=np.int64)
    up = np.full(n, -1, dtype=np.int64)
    cnt = np.zeros(n, dtype=np.int64)
    csum = np.zeros(n, dtype=np.int64)
    for i in range(n):
        v = order[i]
        parent[v] = v
        head[v] = v
        rv = v
        for j in range(indptr[v], indptr[v + 1]):
            u = indices[j]
            if rank[u] < rank[v]:
                ru = _find(parent, u)
                if ru != rv:
                    h = head[ru]
                    up[h] = v
                    cnt[v] += 1
                    csum[v] += h
                    if size[ru] > size[rv]:
                        parent[rv] = ru
                        size[ru] += size[rv]
                        rv = ru
                    else:
                        parent[ru] = rv
                        size[rv] += size[ru]
        head[rv] = v
    return up, cnt, csum


@numba.njit(cache=True)
def _merge(jt_up, jt_cnt, jt_sum, st_dn, st_cnt, st_sum):
    """Carr-Snoeyink-Axen merge of join and split trees into contour-tree arcs (lower, upper)."""
    n = jt_up.shape[0]
    arcs = np.empty((max(n - 1, 0), 2), dtype=np.int64)
    na = 0
    removed = np.zeros(n, dtype=np.bool_)
    stack = np.empty(4 * n + 4, dtype=np.int64)
    sp = 0
    for x in range(n):
        if (jt_cnt[x] == 0 and st_cnt[x] == 1) or (st_cnt[x] == 0 and jt_cnt[x] == 1):
            stack[sp] = x
            sp += 1
    while sp > 0 and na < n - 1:
        sp -= 1
        x = stack[sp]
        if removed[x]:
            continue
        if jt_cnt[x] == 0 and st_cnt[x] == 1 and jt_up[x] >= 0:
            y = jt_up[x]
            arcs[na, 0] = x
            arcs[na, 1] = y
            na += 1
            jt_cnt[y] -= 1
            jt_sum[y] -= x
            z = st_sum[x]
            w = st_dn[x]
            st_dn[z] = w
            if w >= 0:
                st_sum[w] += z - x
        elif st_cnt[x] == 0 and jt_cnt[x] == 1 and st_dn[x] >= 0:
            y = st_dn[x]
            arcs[na, 0] = y
            arcs[na, 1] = x
            na += 1
            st_cnt[y] -= 1
            st_sum[y] -= x
            z = jt_sum[x]
            w = jt_up[x]
            jt_up[z] = w
            if w >= 0:
                jt_sum[w] += z - x
        else:
            continue
        removed[x] = True
        for cand in (y, z, w):
            if cand >= 0 and not removed[cand]:
                stack[sp] = cand
                sp += 1
    return arcs, na


@numba.njit(cache=True)
def _collapse(n, arcs, rank):
    """Collapse regular vertices into critical-to-critical chains."""
    up_cnt = np.zeros(n, dtype=np.int64)
    dn_cnt = np.zeros(n, dtype=np.int64)
    for k in range(arcs.shape[0]):
        up_cnt[arcs[k, 0]] += 1
        dn_cnt[arcs[k, 1]] += 1
    up_ptr = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        up_ptr[v + 1] = up_ptr[v] + up_cnt[v]
    fill = up_ptr[:-1].copy()
    up_nbr = np.empty(arcs.shape[0], dtype=np.int64)
    for k in range(arcs.shape[0]):
        lo = arcs[k, 0]
        up_nbr[fill[lo]] = arcs[k, 1]
        fill[lo] += 1
    critical = np.empty(n, dtype=np.bool_)
    for v in range(n):
        critical[v] = not (up_cnt[v] == 1 and dn_cnt[v] == 1)
    n_edges = 0
    for v in range(n):
        if critical[v]:
            n_edges += up_cnt[v]
    e_lo = np.empty(n_edges, dtype=np.int64)
    e_hi = np.empty(n_edges, dtype=np.int64)
    edge_of = np.full(n, -1, dtype=np.int64)
    e = 0
    for v in range(n):
        if not critical[v]:
            continue
        for j in range(up_ptr[v], up_ptr[v + 1]):
            y = up_nbr[j]
            while not critical[y]:
                edge_of[y] = e
                y = up_nbr[up_ptr[y]]
            e_lo[e] = v
            e_hi[e] = y
            e += 1
    return critical, up_cnt, dn_cnt, e_lo, e_hi, edge_of


@numba.njit(cache=True)
def _subtree_sums(order, parent, parent_edge, node_weight, edge_area):
    sub = node_weight.copy()
    for i in range(order.shape[0] - 1, 0, -1):
        v = order[i]
        sub[parent[v]] += sub[v] + edge_area[parent_edge[v]]
    return sub


class TreePoint(NamedTuple):
    """A point of a contour tree: a node, or an interior level of an edge."""

    level: float
    node: int | None = None
    edge: int | None = None


@dataclass(frozen=True, eq=False)
class ContourTree:
    """Contour tree with critical nodes and area-carrying edges.

    Node ``i`` is mesh vertex ``node_vertex[i]`` with ``node_level[i]``,
    ``node_kind[i]`` and its own vertex weight ``node_weight[i]``.  Edge ``e``
    runs from node ``edge_lo[e]`` up to ``edge_hi[e]``; its interior vertices
    have levels ``atom_levels[edge_ptr[e]:edge_ptr[e+1]]`` (ascending) and
    weights ``atom_weights[...]``.  Node weights plus edge areas sum to the
    total area.
    """

    node_vertex: np.ndarray
    node_level: np.ndarray
    node_kind: np.ndarray
    node_weight: np.ndarray
    edge_lo: np.ndarray
    edge_hi: np.ndarray
    edge_ptr: np.ndarray
    atom_levels: np.ndarray
    atom_weights: np.ndarray
    atom_vertex: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_vertex)

    @property
    def n_edges(self) -> int:
        return len(self.edge_lo)

    @property
    def total_area(self) -> float:
        return float(self.node_weight.sum() + self.atom_weights.sum())

    def kind(self, i: int) -> str:
        return KINDS[self.node_kind[i]]

    def degree(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.edge_lo, self.edge_hi]), minlength=self.n_nodes)

    def edge_atoms(self, e: int) -> tuple[np.ndarray, np.ndarray]:
        s, t = self.edge_ptr[e], self.edge_ptr[e + 1]
        return self.atom_levels[s:t], self.atom_weights[s:t]

    def edge_area(self, e: int) -> float:
        return float(self.edge_areas[e])

    def edge_interval(self, e: int) -> tuple[float, float]:
        return float(self.node_level[self.edge_lo[e]]), float(self.node_level[self.edge_hi[e]])

    def swept_area(self, e: int, level: float) -> float:
        """Area of the edge's interior vertices with level <= ``level``."""
        lv, w = self.edge_atoms(e)
        k = np.searchsorted(lv, level, side="right")
        return float(w[:k].sum())

    def area_profile(self, e: int) -> tuple[np.ndarray, np.ndarray]:
        """Piecewise-linear swept-area profile as ``(levels, areas)`` samples.

        Starts at ``(lo level, 0)``, passes through the cumulative area after
        each interior vertex and ends at ``(hi level, edge area)``.
        """
        lo, hi = self.edge_interval(e)
        lv, w = self.edge_atoms(e)
        levels = np.concatenate([[lo], lv, [hi]])
        cum = np.cumsum(w)
        areas = np.concatenate([[0.0], cum, cum[-1:] if len(cum) else [0.0]])
        return levels, areas

    def neighbors(self) -> list[list[tuple[int, int]]]:
        """Per node: list of ``(edge, other node)``."""
        nb: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for e, (a, b) in enumerate(zip(self.edge_lo.tolist(), self.edge_hi.tolist())):
            nb[a].append((e, b))
            nb[b].append((e, a))
        return nb

    @cached_property
    def edge_areas(self) -> np.ndarray:
        owner = np.repeat(np.arange(self.n_edges), np.diff(self.edge_ptr))
        return np.bincount(owner, weights=self.atom_weights, minlength=self.n_edges)

    def _rooted(self):
        """Root at node 0; return (parent, parent edge, subtree weight, neighbour lists)."""
        if "_rooted_cache" in self.__dict__:
            return self.__dict__["_rooted_cache"]
        n = self.n_nodes
        if n == 1:
            result = (np.array([-1]), np.array([-1]), self.node_weight.astype(float).copy(), [[]])
            self.__dict__["_rooted_cache"] = result
            return result
        a, b = self.edge_lo, self.edge_hi
        adj = coo_matrix((np.ones(self.n_edges), (a, b)), shape=(n, n))
        order, pred = breadth_first_order(adj, 0, directed=False, return_predecessors=True)
        if len(order) != n:
            raise TopologyError("contour tree is disconnected")
        parent = np.where(pred < 0, -1, pred).astype(np.int64)
        parent_edge = np.full(n, -1, dtype=np.int64)
        b_child = parent[b] == a
        parent_edge[b[b_child]] = np.flatnonzero(b_child)
        parent_edge[a[~b_child]] = np.flatnonzero(~b_child)
        sub = _subtree_sums(order.astype(np.int64), parent, parent_edge,
                            self.node_weight.astype(float), self.edge_areas)
        result = (parent, parent_edge, sub, self.neighbors())
        self.__dict__["_rooted_cache"] = result
        return result

    def side_weight(self, e: int, node: int) -> float:
        """Weight of the part of the tree beyond ``node`` when edge ``e``'s interior is cut out."""
        parent, parent_edge, sub, _ = self._rooted()
        a, b = int(self.edge_lo[e]), int(self.edge_hi[e])
        child = a if parent_edge[a] == e else b
        if node == child:
            return float(sub[child])
        return float(sub[0] - sub[child] - self.edge_area(e))

    def cross_section(self, c: float) -> tuple[list[float], list[float]]:
        """Areas of the components of ``{F <= c}`` and ``{F >= c}`` read off the tree."""
        return self._level_components(c, lower=True), self._level_components(c, lower=False)

    def _level_components(self, c: float, lower: bool) -> list[float]:
        lvl = self.node_level
        inside = lvl <= c if lower else lvl >= c
        parent = np.arange(self.n_nodes)

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        area = np.where(inside, self.node_weight, 0.0)
        partial = []
        for e in range(self.n_edges):
            lo, hi = int(self.edge_lo[e]), int(self.edge_hi[e])
            lv, w = self.edge_atoms(e)
            if inside[lo] and inside[hi]:
                ra, rb = find(lo), find(hi)
                if ra != rb:
                    parent[ra] = rb
                partial.append((lo, float(w.sum())))
            elif lower and inside[lo]:
                partial.append((lo, float(w[: np.searchsorted(lv, c, side="right")].sum())))
            elif not lower and inside[hi]:
                partial.append((hi, float(w[np.searchsorted(lv, c, side="left"):].sum())))
        comps: dict[int, float] = {}
        for v in np.flatnonzero(inside):
            r = find(int(v))
            comps[r] = comps.get(r, 0.0) + float(area[v])
        for v, a in partial:
            r = find(v)
            comps[r] += a
        return sorted(comps.values(), reverse=True)


def build_contour_tree(F: ScalarField) -> ContourTree:
    """Contour tree of ``F`` with per-edge area data."""
    mesh = F.mesh
    if mesh.euler_characteristic != 2:
        raise TopologyError(f"mesh has Euler characteristic {mesh.euler_characteristic}, need a sphere")
    n = mesh.n_vertices
    vals = F.values
    order = np.lexsort((np.arange(n), vals)).astype(np.int64)
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    indptr, indices = mesh.adjacency
    jt_up, jt_cnt, jt_sum = _sweep(order, rank, indptr, indices)
    st_dn, st_cnt, st_sum = _sweep(order[::-1].copy(), n - 1 - rank, indptr, indices)
    arcs, na = _merge(jt_up, jt_cnt, jt_sum, st_dn, st_cnt, st_sum)
    if na != n - 1:
        raise TopologyError(f"join/split merge produced {na} arcs for {n} vertices; not a tree")
    critical, up_cnt, dn_cnt, e_lo, e_hi, edge_of = _collapse(n, arcs, rank)

    node_vertex = np.flatnonzero(critical)
    node_index = np.full(n, -1, dtype=np.int64)
    node_index[node_vertex] = np.arange(len(node_vertex))
    kind = np.full(len(node_vertex), 2, dtype=np.int8)
    kind[dn_cnt[node_vertex] == 0] = 0
    kind[(up_cnt[node_vertex] == 0) & (dn_cnt[node_vertex] > 0)] = 1

    regular = np.flatnonzero(~critical)
    reg = regular[np.lexsort((rank[regular], edge_of[regular]))]
    counts = np.bincount(edge_of[reg], minlength=len(e_lo))
    edge_ptr = np.zeros(len(e_lo) + 1, dtype=np.int64)
    np.cumsum(counts, out=edge_ptr[1:])
    w = mesh.vertex_weights
    tree = ContourTree(
        node_vertex=node_vertex,
        node_level=vals[node_vertex].copy(),
        node_kind=kind,
        node_weight=w[node_vertex].copy(),
        edge_lo=node_index[e_lo],
        edge_hi=node_index[e_hi],
        edge_ptr=edge_ptr,
        atom_levels=vals[reg].copy(),
        atom_weights=w[reg].copy(),
        atom_vertex=reg,
    )
    for name in ("node_vertex", "node_level", "node_kind", "node_weight", "edge_lo", "edge_hi",
                 "edge_ptr", "atom_levels", "atom_weights", "atom_vertex"):
        getattr(tree, name).flags.writeable = False
    return tree


class Component(NamedTuple):
    vertices: np.ndarray
    area: float


def _components(mesh, mask: np.ndarray) -> list[Component]:
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return []
    e = mesh.edges
    keep = mask[e[:, 0]] & mask[e[:, 1]]
    local = np.full(mesh.n_vertices, -1, dtype=np.int64)
    local[idx] = np.arange(len(idx))
    ee = local[e[keep]]
    m = len(idx)
    graph = coo_matrix((np.ones(len(ee)), (ee[:, 0], ee[:, 1])), shape=(m, m))
    ncomp, labels = connected_components(graph, directed=False)
    w = mesh.vertex_weights[idx]
    areas = np.bincount(labels, weights=w, minlength=ncomp)
    return [Component(idx[labels == k], float(areas[k])) for k in range(ncomp)]


def brute_force_components(F: ScalarField, c: float) -> tuple[list[Component], list[Component]]:
    """Components of ``{F <= c}`` and ``{F >= c}`` found directly on the vertex graph."""
    return _components(F.mesh, F.values <= c), _components(F.mesh, F.values >= c)


def complement_max_area(tree: ContourTree, point: TreePoint) -> float:
    """Largest area among the pieces of the tree left after removing ``point``."""
    if point.node is not None:
        v = int(point.node)
        if not 0 <= v < tree.n_nodes:
            raise ValueError(f"node {v} is not in the tree")
        _, _, _, nb = tree._rooted()
        if not nb[v]:
            return 0.0
        return max(tree.edge_area(e) + tree.side_weight(e, u) for e, u in nb[v])
    if point.edge is None:
        raise ValueError("tree point needs a node or an edge")
    e = int(point.edge)
    if not 0 <= e < tree.n_edges:
        raise ValueError(f"edge {e} is not in the tree")
    lo, hi = tree.edge_interval(e)
    c = float(point.level)
    if not lo <= c <= hi:
        raise ValueError(f"level {c} is outside edge {e}'s interval [{lo}, {hi}]")
    lv, w = tree.edge_atoms(e)
    below = tree.side_weight(e, int(tree.edge_lo[e])) + float(w[: np.searchsorted(lv, c, side="left")].sum())
    above = tree.side_weight(e, int(tree.edge_hi[e])) + float(w[np.searchsorted(lv, c, side="right"):].sum())
    return max(below, above)
