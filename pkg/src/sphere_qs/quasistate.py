"""The median quasi-state ``zeta`` on the sphere and the functional ``Pi``.

``zeta(F)`` is the level of the point of the contour tree of ``F`` at which
no piece of the complement carries more than half of the total area.  With
area concentrated at the mesh vertices that point is generically a vertex;
when one piece weighs exactly one half the median is the whole segment
between two neighbouring vertices and its midpoint is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .geometry import ScalarField, bracket_norm, check_same_mesh
from .reeb import ContourTree, TreePoint, _components, build_contour_tree, complement_max_area

TIE_TOL = 1e-12
MEDIAN_TOL = 1e-6
VACUOUS_TOL = 1e-9


@dataclass(frozen=True)
class QuasiStateConfig:
    """Defect of the underlying quasi-morphism (2 from Floer theory, 1/2 from the sharper topological bound)."""

    defect_C: float = 0.5

    def __post_init__(self):
        if not (self.defect_C > 0 and math.isfinite(self.defect_C)):
            raise ValueError(f"defect_C must be positive, got {self.defect_C}")


def _branches(tree: ContourTree, where):
    """Branch weights around a node ``("node", v)`` or an atom ``("atom", e, k)``.

    Each entry is ``(weight, neighbour position)`` where the neighbour is the
    closest node or atom in that direction.
    """
    out = []
    if where[0] == "node":
        v = where[1]
        _, _, _, nb = tree._rooted()
        for e, u in nb[v]:
            lv, w = tree.edge_atoms(e)
            weight = tree.edge_area(e) + tree.side_weight(e, u)
            if len(w) == 0:
                nxt = ("node", u, e)
            elif v == tree.edge_lo[e]:
                nxt = ("atom", e, 0)
            else:
                nxt = ("atom", e, len(w) - 1)
            out.append((weight, nxt))
        return out
    _, e, k = where
    lo, hi = int(tree.edge_lo[e]), int(tree.edge_hi[e])
    lv, w = tree.edge_atoms(e)
    below = tree.side_weight(e, lo) + float(w[:k].sum())
    above = tree.side_weight(e, hi) + float(w[k + 1:].sum())
    out.append((below, ("atom", e, k - 1) if k > 0 else ("node", lo, e)))
    out.append((above, ("atom", e, k + 1) if k + 1 < len(w) else ("node", hi, e)))
    return out


def _level_of(tree: ContourTree, where) -> float:
    if where[0] == "node":
        return float(tree.node_level[where[1]])
    return float(tree.edge_atoms(where[1])[0][where[2]])


def median_point(tree: ContourTree) -> TreePoint:
    """Point of ``tree`` minimising the largest complement piece (at most half the area)."""
    parent, parent_edge, sub, nb = tree._rooted()
    total = float(sub[0])
    half = 0.5 * total
    tol = TIE_TOL * max(total, 1.0)
    v, came_by = 0, -1
    where = None
    while where is None:
        step = None
        for e, u in nb[v]:
            if e == came_by:
                continue
            far_node = tree.side_weight(e, u)
            if tree.edge_area(e) + far_node > half + tol:
                step = (e, u, far_node)
                break
        if step is None:
            where = ("node", v)
            break
        e, u, far_node = step
        lv, w = tree.edge_atoms(e)
        toward_hi = v == tree.edge_lo[e]
        # far[k]: weight strictly beyond atom k on u's side.
        if toward_hi:
            far = far_node + (w.sum() - np.cumsum(w))
            hits = np.flatnonzero(far <= half + tol)
            if len(hits):
                where = ("atom", e, int(hits[0]))
        else:
            far = far_node + (np.cumsum(w) - w)
            hits = np.flatnonzero(far <= half + tol)
            if len(hits):
                where = ("atom", e, int(hits[-1]))
        v, came_by = u, e

    level = _level_of(tree, where)
    ties = [nxt for weight, nxt in _branches(tree, where) if abs(weight - half) <= tol]
    if ties:
        partner = ties[0]
        mid = 0.5 * (level + _level_of(tree, partner))
        edge = where[1] if where[0] == "atom" else partner[-1] if partner[0] == "node" else partner[1]
        point = TreePoint(level=mid, edge=int(edge))
    elif where[0] == "node":
        point = TreePoint(level=level, node=int(where[1]))
    else:
        point = TreePoint(level=level, edge=int(where[1]))
    return point


def check_median(tree: ContourTree, point: TreePoint) -> float:
    """Return the largest complement piece at ``point``; raise if it exceeds half plus tolerance."""
    worst = complement_max_area(tree, point)
    if worst > 0.5 * tree.total_area + MEDIAN_TOL:
        raise AssertionError(f"median check failed: complement piece of area {worst}")
    return worst


def zeta(F: ScalarField) -> float:
    """Median quasi-state of ``F``."""
    return median_point(build_contour_tree(F)).level


def _sublevel_is_central(F: ScalarField, c: float) -> bool:
    """Is some component of ``{F <= c}`` a centroid of the region adjacency tree at level ``c``?"""
    mesh = F.mesh
    low = F.values <= c
    lower = _components(mesh, low)
    n_low = len(lower)
    if n_low == 0:
        return False
    regions = lower + _components(mesh, ~low)
    label = np.empty(mesh.n_vertices, dtype=np.int64)
    for r, comp in enumerate(regions):
        label[comp.vertices] = r
    e = mesh.edges
    la, lb = label[e[:, 0]], label[e[:, 1]]
    cross = la != lb
    g = nx.Graph()
    g.add_nodes_from(range(len(regions)))
    g.add_edges_from(zip(la[cross].tolist(), lb[cross].tolist()))
    weight = np.array([comp.area for comp in regions])
    total = weight.sum()
    half = 0.5 * total
    tol = TIE_TOL * max(total, 1.0)
    preds = nx.dfs_predecessors(g, 0)
    subtree = weight.copy()
    for node in nx.dfs_postorder_nodes(g, 0):
        if node in preds:
            subtree[preds[node]] += subtree[node]
    for s in range(n_low):
        pieces = [subtree[ch] for ch in g.neighbors(s) if preds.get(ch) == s]
        if s != 0:
            pieces.append(total - subtree[s])
        if max(pieces, default=0.0) <= half + tol:
            return True
    return False


def zeta_bruteforce(F: ScalarField, n_levels: int = 512) -> float:
    """Independent median search by bisection over levels.

    Works only with vertex-graph components of sub- and superlevel sets: the
    quasi-state is the smallest level ``c`` at which a component of
    ``{F <= c}`` leaves no complementary region heavier than one half.  The
    search first brackets that level on a uniform grid of ``n_levels``
    levels, then bisects over the vertex values inside the bracket.
    """
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    vals = F.values
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        return lo
    grid = np.linspace(lo, hi, n_levels)
    grid[-1] = hi
    if _sublevel_is_central(F, grid[0]):
        return lo
    a, b = 0, n_levels - 1  # predicate false at a, true at b
    while b - a > 1:
        mid = (a + b) // 2
        if _sublevel_is_central(F, grid[mid]):
            b = mid
        else:
            a = mid
    cand = np.unique(vals[(vals > grid[a]) & (vals <= grid[b])])
    i, j = -1, len(cand) - 1
    while j - i > 1:
        mid = (i + j) // 2
        if _sublevel_is_central(F, cand[mid]):
            j = mid
        else:
            i = mid
    return float(cand[j])


def pi_functional(F: ScalarField, G: ScalarField) -> float:
    """``|zeta(F + G) - zeta(F) - zeta(G)|``."""
    check_same_mesh(F, G)
    return abs(zeta(F + G) - zeta(F) - zeta(G))


@dataclass(frozen=True)
class BracketInequalityReport:
    pi: float
    bracket_norm: float
    bound: float
    C: float
    satisfied: bool
    slack: float = 0.0

    @property
    def implied_C(self) -> float:
        """Smallest defect compatible with this pair, ``pi**2 / (2 * ||{F, G}||)``."""
        return self.pi ** 2 / (2 * self.bracket_norm) if self.bracket_norm > 0 else math.inf

    def as_row(self) -> dict:
        return {"pi": self.pi, "bracket_norm": self.bracket_norm, "bound": self.bound,
                "C": self.C, "satisfied": self.satisfied}


def bracket_inequality_report(F: ScalarField, G: ScalarField, cfg: QuasiStateConfig = QuasiStateConfig(),
                              slack: float = 0.05) -> BracketInequalityReport:
    """Compare ``Pi(F, G)`` with ``sqrt(2 C ||{F, G}||)``."""
    pi = pi_functional(F, G)
    norm = bracket_norm(F, G)
    bound = math.sqrt(2.0 * cfg.defect_C * norm)
    return BracketInequalityReport(pi, norm, bound, cfg.defect_C, pi <= bound + slack, slack)


@dataclass(frozen=True)
class RobustnessReport:
    pi_value: float
    C: float
    upsilon_lower: float
    eps_max_lower: float
    upsilon_curve: dict = field(default_factory=dict)
    vacuous: bool = False

    def curve(self, eps: float) -> float:
        return upsilon_lower_bound(self.pi_value, eps, self.C)


def upsilon_lower_bound(pi: float, eps: float, C: float) -> float:
    """Lower bound on the bracket norm over the ``eps``-neighbourhood: ``(pi - 2 eps)^2 / 2C`` while positive."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if 2 * eps >= pi:
        return 0.0
    return (pi - 2.0 * eps) ** 2 / (2.0 * C)


def robustness_report(F: ScalarField, G: ScalarField, cfg: QuasiStateConfig = QuasiStateConfig(),
                      eps_samples=(), pi: float | None = None) -> RobustnessReport:
    """C^0-robustness lower bounds derived from ``Pi(F, G)``."""
    if pi is None:
        pi = pi_functional(F, G)
    C = cfg.defect_C
    vacuous = pi <= VACUOUS_TOL
    curve = {float(e): upsilon_lower_bound(pi, float(e), C) for e in eps_samples}
    return RobustnessReport(
        pi_value=pi,
        C=C,
        upsilon_lower=0.0 if vacuous else pi ** 2 / (2.0 * C),
        eps_max_lower=0.0 if vacuous else pi / 2.0,
        upsilon_curve=curve,
        vacuous=vacuous,
    )
