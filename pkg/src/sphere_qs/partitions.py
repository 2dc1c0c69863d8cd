"""Partitions of unity subordinate to covers by small caps.

Each member is a scaled bump ``(1 - (d/r)^2)^3`` in the geodesic distance
``d`` to a cap centre, exactly zero outside the cap.  Caps of normalised
area below one half are displaceable by a rotation, so every member has a
vanishing quasi-state and the bracket lower bound for partitions applies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionError
from .geometry import ScalarField, SphereMesh, build_icosphere, poisson_bracket, uniform_norm
from .quasistate import QuasiStateConfig

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
SUM_TOL = 1e-9
CSV_COLUMNS = ("N", "m", "N_eff", "measured_max_bracket", "proof_bound", "satisfied")


def fibonacci_lattice(n: int) -> np.ndarray:
    """``n`` nearly uniform unit vectors on a golden-angle spiral."""
    if n < 1:
        raise ValueError("n must be positive")
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(1.0 - z * z)
    phi = GOLDEN_ANGLE * i
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def geodesic_distance(points: np.ndarray, center) -> np.ndarray:
    """Great-circle distance from each row of ``points`` to ``center`` (normalised)."""
    c = np.asarray(center, dtype=float)
    nc = np.linalg.norm(c)
    if nc == 0:
        raise ValueError("cap centre must be nonzero")
    c = c / nc
    cross = np.linalg.norm(np.cross(points, c), axis=-1)
    return np.arctan2(cross, points @ c)


def cap_bump(points: np.ndarray, center, radius: float) -> np.ndarray:
    """``(1 - (d/r)^2)^3`` inside the cap of geodesic ``radius``, zero outside."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    d = geodesic_distance(np.atleast_2d(points), center)
    return np.clip(1.0 - (d / radius) ** 2, 0.0, None) ** 3


def cap_area(radius: float) -> float:
    """Normalised area ``(1 - cos r) / 2`` of a cap of geodesic radius ``r``."""
    return 0.5 * (1.0 - math.cos(radius))


@dataclass(frozen=True)
class Cap:
    center: tuple
    radius: float

    @property
    def area(self) -> float:
        return cap_area(self.radius)

    def separated_from(self, other: "Cap") -> bool:
        """True when the closed caps cannot meet."""
        d = float(geodesic_distance(np.asarray([self.center]), other.center)[0])
        return d >= self.radius + other.radius


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Fields ``rho_i`` with cap support certificates and ``sum rho_i >= 1``.

    ``base_index[i]`` identifies members that are copies of the same field,
    as produced by :func:`duplicate_partition`.
    """

    members: tuple
    support_caps: tuple
    base_index: tuple = ()
    multiplicity: int = 1

    def __post_init__(self):
        if len(self.members) != len(self.support_caps):
            raise ValueError("one certificate cap per member is required")
        if not self.base_index:
            object.__setattr__(self, "base_index", tuple(range(len(self.members))))

    @property
    def N(self) -> int:
        return len(self.members)

    @property
    def mesh(self) -> SphereMesh:
        return self.members[0].mesh

    def total(self) -> np.ndarray:
        return np.sum([m.values for m in self.members], axis=0)

    def check(self) -> None:
        """Raise :class:`ConstructionError` if an invariant fails."""
        verts = self.mesh.vertices
        for i, (rho, cap) in enumerate(zip(self.members, self.support_caps)):
            if np.any(rho.values < 0):
                raise ConstructionError(f"member {i} takes negative values")
            if not cap.area < 0.5:
                raise ConstructionError(f"cap {i} has area {cap.area:.4f}, not displaceable")
            outside = geodesic_distance(verts, cap.center) >= cap.radius
            if np.any(rho.values[outside] != 0):
                raise ConstructionError(f"member {i} is nonzero outside its certificate cap")
        low = float(self.total().min())
        if low < 1.0 - SUM_TOL:
            raise ConstructionError(f"sum of members drops to {low:.3g} < 1")


def covering_radius(points: np.ndarray, centers: np.ndarray) -> float:
    """Largest geodesic distance from ``points`` to the nearest centre."""
    best = np.full(len(points), -1.0)
    for c in centers:
        np.maximum(best, points @ c, out=best)
    return float(np.arccos(np.clip(best.min(), -1.0, 1.0)))


def build_cap_partition(mesh: SphereMesh, N: int, overlap: float = 0.3) -> PartitionOfUnity:
    """Partition of unity from bumps on ``N`` Fibonacci-lattice caps.

    The radius is ``(1 + overlap)`` times the covering radius of the lattice,
    measured over the mesh vertices.  Raw bumps are multiplied by a common
    constant so that their sum is at least one at every vertex.
    """
    if not 0 < overlap < 1:
        raise ValueError("overlap must lie in (0, 1)")
    if N < 2:
        raise ConstructionError(f"{N} cap(s) of area below 1/2 cannot cover the sphere")
    centers = fibonacci_lattice(N)
    radius = (1.0 + overlap) * covering_radius(mesh.vertices, centers)
    if not cap_area(radius) < 0.5:
        raise ConstructionError(
            f"N = {N} needs caps of area {cap_area(radius):.3f}; at least 1/2 is not displaceable")
    bumps = np.array([cap_bump(mesh.vertices, c, radius) for c in centers])
    total = bumps.sum(axis=0)
    low = float(total.min())
    if not low > 0:
        raise ConstructionError("the caps do not cover every vertex")
    bumps /= low
    members = tuple(ScalarField(mesh, b) for b in bumps)
    caps = tuple(Cap(tuple(map(float, c)), float(radius)) for c in centers)
    P = PartitionOfUnity(members, caps)
    P.check()
    return P


def duplicate_partition(P: PartitionOfUnity, m: int) -> PartitionOfUnity:
    """Each member divided by ``m`` and repeated ``m`` times."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if m == 1:
        return P
    members, caps, base = [], [], []
    for rho, cap, b in zip(P.members, P.support_caps, P.base_index):
        scaled = rho / m
        members += [scaled] * m
        caps += [cap] * m
        base += [b] * m
    return PartitionOfUnity(tuple(members), tuple(caps), tuple(base), P.multiplicity * m)


def max_pairwise_bracket(P: PartitionOfUnity) -> float:
    """``max_{i<j} ||{rho_i, rho_j}||``, skipping copies and pairs of separated caps."""
    first = {}
    for i, b in enumerate(P.base_index):
        first.setdefault(b, i)
    reps = sorted(first.values())
    best = 0.0
    for a, i in enumerate(reps):
        for j in reps[a + 1:]:
            if P.support_caps[i].separated_from(P.support_caps[j]):
                continue
            best = max(best, uniform_norm(poisson_bracket(P.members[i], P.members[j])))
    return best


def proof_lower_bound(N: int, cfg: QuasiStateConfig = QuasiStateConfig()) -> float:
    """``1 / (2C (sum_{k=2}^N sqrt(k-1))^2)``: the smallest max bracket a partition can have."""
    if N < 2:
        raise ValueError("N must be at least 2")
    s = math.fsum(math.sqrt(k - 1) for k in range(2, N + 1))
    return 1.0 / (2.0 * cfg.defect_C * s * s)


@dataclass(frozen=True)
class PartitionRow:
    N: int
    m: int
    N_eff: int
    measured_max_bracket: float
    proof_bound: float
    slack: float

    @property
    def satisfied(self) -> bool:
        return self.measured_max_bracket >= self.proof_bound - self.slack

    def as_row(self) -> dict:
        return {"N": self.N, "m": self.m, "N_eff": self.N_eff,
                "measured_max_bracket": self.measured_max_bracket,
                "proof_bound": self.proof_bound, "satisfied": self.satisfied}


@dataclass(frozen=True)
class ScalingExperiment:
    rows: list
    slopes: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        from .formats import format_csv

        return format_csv([r.as_row() for r in self.rows], CSV_COLUMNS)

    @property
    def all_satisfied(self) -> bool:
        return all(r.satisfied for r in self.rows)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def scaling_experiment(mesh: SphereMesh, N_list, m_list, cfg: QuasiStateConfig = QuasiStateConfig(),
                       overlap: float = 0.3) -> ScalingExperiment:
    """Max brackets of base partitions and their duplicates against the proof bound.

    The slack of every row is twice the change of the base measurement
    between the mesh and the next coarser icosphere.  ``slopes`` maps each
    base ``N`` to the fitted log-log slope of the max bracket against the
    multiplicity.
    """
    N_list, m_list = list(N_list), list(m_list)
    if not N_list or not m_list:
        raise ValueError("N_list and m_list must be nonempty")
    rows, slopes = [], {}
    for N in N_list:
        base = build_cap_partition(mesh, N, overlap)
        a = max_pairwise_bracket(base)
        err = 0.0
        if mesh.subdivision_level >= 1:
            coarse = build_cap_partition(build_icosphere(mesh.subdivision_level - 1), N, overlap)
            err = abs(a - max_pairwise_bracket(coarse))
        measured = []
        for m in m_list:
            am = max_pairwise_bracket(duplicate_partition(base, m))
            measured.append(am)
            rows.append(PartitionRow(N, m, N * m, am, proof_lower_bound(N * m, cfg), 2.0 * err / m ** 2))
        if len(m_list) > 1:
            slopes[N] = loglog_slope(m_list, measured)
    return ScalingExperiment(rows, slopes)
