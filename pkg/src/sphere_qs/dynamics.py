"""Hamiltonian flows on the mesh and the pointer-model measurement.

Trajectories are integrated with the classical fourth-order Runge-Kutta
scheme in ambient coordinates.  The vertex vector field is interpolated
barycentrically inside the triangle containing the point (found by walking
across triangle neighbours), re-projected to the tangent plane, and every
state is renormalised to the sphere.  By default each step is followed by
a Newton projection back onto the level set of the generator, which keeps
the interpolated generator constant along the computed trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import IntegratorError
from .geometry import ScalarField, bracket_norm, check_same_mesh, hamiltonian_vector_field, mean_value, \
    oscillation, triangle_gradients, uniform_norm
from .quasistate import QuasiStateConfig, pi_functional

STEP_DRIFT_BUDGET = 1e-6
_WALK_LIMIT = 1_000_000
_EDGE_EPS = 1e-15
_MAX_PROJECTION = 0.05
_PROJECTION_ITERS = 12


@numba.njit(cache=True, inline="always")
def _det(p, a, b):
    return (p[0] * (a[1] * b[2] - a[2] * b[1])
            - p[1] * (a[0] * b[2] - a[2] * b[0])
            + p[2] * (a[0] * b[1] - a[1] * b[0]))


@numba.njit(cache=True)
def _locate(p, t, verts, tris, nbrs, lam):
    """Walk from triangle ``t`` to the triangle whose cone contains ``p``; fill ``lam``."""
    for _ in range(_WALK_LIMIT):
        a = verts[tris[t, 0]]
        b = verts[tris[t, 1]]
        c = verts[tris[t, 2]]
        d0 = _det(p, b, c)
        d1 = _det(a, p, c)
        d2 = _det(a, b, p)
        if d0 >= -_EDGE_EPS and d1 >= -_EDGE_EPS and d2 >= -_EDGE_EPS:
            d0 = max(d0, 0.0)
            d1 = max(d1, 0.0)
            d2 = max(d2, 0.0)
            s = d0 + d1 + d2
            lam[0] = d0 / s
            lam[1] = d1 / s
            lam[2] = d2 / s
            return t
        if d0 <= d1 and d0 <= d2:
            t = nbrs[t, 0]
        elif d1 <= d2:
            t = nbrs[t, 1]
        else:
            t = nbrs[t, 2]
    return -1


@numba.njit(cache=True)
def _field_at(p, t, verts, tris, nbrs, vecs, out, lam):
    t = _locate(p, t, verts, tris, nbrs, lam)
    if t < 0:
        return t
    # 1/|q| for the chord point q keeps fields linear in p (rigid rotations) exact.
    q2 = 0.0
    for d in range(3):
        qd = lam[0] * verts[tris[t, 0], d] + lam[1] * verts[tris[t, 1], d] + lam[2] * verts[tris[t, 2], d]
        q2 += qd * qd
    inv = 1.0 / math.sqrt(q2)
    for d in range(3):
        out[d] = inv * (lam[0] * vecs[tris[t, 0], d] + lam[1] * vecs[tris[t, 1], d]
                        + lam[2] * vecs[tris[t, 2], d])
    dot = out[0] * p[0] + out[1] * p[1] + out[2] * p[2]
    for d in range(3):
        out[d] -= dot * p[d]
    return t


@numba.njit(cache=True)
def _scalar_at(t, lam, tris, vals):
    return lam[0] * vals[tris[t, 0]] + lam[1] * vals[tris[t, 1]] + lam[2] * vals[tris[t, 2]]


@numba.njit(cache=True, inline="always")
def _normalize(x):
    n = math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    x[0] /= n
    x[1] /= n
    x[2] /= n


@numba.njit(cache=True)
def _bracket_project(x, t, g0, verts, tris, nbrs, gen, vgrad, lam, xs, dirv):
    """Move ``x`` along the smoothed gradient until the interpolant crosses ``g0``, then bisect."""
    t = _field_at(x, t, verts, tris, nbrs, vgrad, dirv, lam)
    if t < 0:
        return t
    nd = math.sqrt(dirv[0] * dirv[0] + dirv[1] * dirv[1] + dirv[2] * dirv[2])
    if nd < 1e-300:
        return t
    sign = 1.0 if _scalar_at(t, lam, tris, gen) < g0 else -1.0
    lo, hi = 0.0, -1.0
    s = 1e-9
    while s <= _MAX_PROJECTION:
        for d in range(3):
            xs[d] = x[d] + sign * s * dirv[d] / nd
        _normalize(xs)
        t2 = _locate(xs, t, verts, tris, nbrs, lam)
        if t2 < 0:
            return t2
        if sign * (_scalar_at(t2, lam, tris, gen) - g0) >= 0.0:
            hi = s
            break
        lo = s
        s *= 2.0
    if hi < 0:
        _locate(x, t, verts, tris, nbrs, lam)
        return t
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        for d in range(3):
            xs[d] = x[d] + sign * mid * dirv[d] / nd
        _normalize(xs)
        t2 = _locate(xs, t, verts, tris, nbrs, lam)
        if sign * (_scalar_at(t2, lam, tris, gen) - g0) >= 0.0:
            hi = mid
        else:
            lo = mid
    for d in range(3):
        x[d] = x[d] + sign * hi * dirv[d] / nd
    _normalize(x)
    return _locate(x, t, verts, tris, nbrs, lam)


@numba.njit(cache=True)
def _flow_batch(starts, start_tri, h, nsteps, verts, tris, nbrs, vecs, gen, gen_grad, gen_vgrad, avg_fields,
                project, record):
    """Integrate many trajectories.

    Returns final points, final triangles, trapezoid time averages of
    ``avg_fields`` (rows) along each trajectory, the largest per-step change
    of the generator before projection, the largest deviation of the
    generator from its initial value, and (if ``record``) all states.
    """
    m = starts.shape[0]
    nf = avg_fields.shape[0]
    final = np.empty((m, 3))
    final_tri = np.empty(m, dtype=np.int64)
    averages = np.zeros((m, nf))
    step_drift = np.zeros(m)
    total_drift = np.zeros(m)
    if record:
        path = np.empty((m, nsteps + 1, 3))
    else:
        path = np.empty((0, 0, 3))
    x = np.empty(3)
    xs = np.empty(3)
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    g = np.empty(3)
    lam = np.empty(3)
    lam2 = np.empty(3)
    for i in range(m):
        x[:] = starts[i]
        t = _locate(x, start_tri[i], verts, tris, nbrs, lam)
        if t < 0:
            final_tri[i] = -1
            continue
        g0 = _scalar_at(t, lam, tris, gen)
        for f in range(nf):
            averages[i, f] = 0.5 * _scalar_at(t, lam, tris, avg_fields[f])
        if record:
            path[i, 0] = x
        g_prev = g0
        failed = False
        for s in range(nsteps):
            t = _field_at(x, t, verts, tris, nbrs, vecs, k1, lam)
            for d in range(3):
                xs[d] = x[d] + 0.5 * h * k1[d]
            _normalize(xs)
            t = _field_at(xs, t, verts, tris, nbrs, vecs, k2, lam)
            for d in range(3):
                xs[d] = x[d] + 0.5 * h * k2[d]
            _normalize(xs)
            t = _field_at(xs, t, verts, tris, nbrs, vecs, k3, lam)
            for d in range(3):
                xs[d] = x[d] + h * k3[d]
            _normalize(xs)
            t = _field_at(xs, t, verts, tris, nbrs, vecs, k4, lam)
            if t < 0:
                failed = True
                break
            for d in range(3):
                x[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])
            _normalize(x)
            t = _locate(x, t, verts, tris, nbrs, lam)
            if t < 0:
                failed = True
                break
            gv = _scalar_at(t, lam, tris, gen)
            dstep = abs(gv - g_prev)
            if dstep > step_drift[i]:
                step_drift[i] = dstep
            if project:
                damp = 1.0
                for _ in range(_PROJECTION_ITERS):
                    err = gv - g0
                    if abs(err) <= 1e-14:
                        break
                    gg = (gen_grad[t, 0] * gen_grad[t, 0] + gen_grad[t, 1] * gen_grad[t, 1]
                          + gen_grad[t, 2] * gen_grad[t, 2])
                    if gg < 1e-24:
                        break
                    scale = damp * err / gg
                    move = abs(scale) * math.sqrt(gg)
                    if move > _MAX_PROJECTION:
                        scale *= _MAX_PROJECTION / move
                    # Newton step on the chord plane, where the interpolant is linear.
                    for d in range(3):
                        xs[d] = (lam[0] * verts[tris[t, 0], d] + lam[1] * verts[tris[t, 1], d]
                                 + lam[2] * verts[tris[t, 2], d]) - scale * gen_grad[t, d]
                    _normalize(xs)
                    t2 = _locate(xs, t, verts, tris, nbrs, lam2)
                    if t2 < 0:
                        break
                    gv2 = _scalar_at(t2, lam2, tris, gen)
                    if abs(gv2 - g0) < abs(err):
                        t = t2
                        x[:] = xs
                        lam[:] = lam2
                        gv = gv2
                        damp = 1.0
                    else:
                        # overshoot across a kink of the interpolant
                        damp *= 0.5
                if abs(gv - g0) > 1e-14:
                    t = _bracket_project(x, t, g0, verts, tris, nbrs, gen, gen_vgrad, lam, xs, g)
                    if t < 0:
                        failed = True
                        break
                    gv = _scalar_at(t, lam, tris, gen)
            g_prev = gv
            dev = abs(gv - g0)
            if dev > total_drift[i]:
                total_drift[i] = dev
            wgt = 0.5 if s == nsteps - 1 else 1.0
            for f in range(nf):
                averages[i, f] += wgt * _scalar_at(t, lam, tris, avg_fields[f])
            if record:
                path[i, s + 1] = x
        if failed:
            final_tri[i] = -1
            continue
        final[i] = x
        final_tri[i] = t
        if nsteps > 0:
            for f in range(nf):
                averages[i, f] /= nsteps
        else:
            for f in range(nf):
                averages[i, f] *= 2.0
    return final, final_tri, averages, step_drift, total_drift, path


@numba.njit(cache=True)
def _interpolate(points, hint, verts, tris, nbrs, vals):
    out = np.empty(points.shape[0])
    lam = np.empty(3)
    for i in range(points.shape[0]):
        t = _locate(points[i], hint[i], verts, tris, nbrs, lam)
        out[i] = _scalar_at(t, lam, tris, vals) if t >= 0 else np.nan
    return out


def locate_points(mesh, points: np.ndarray) -> np.ndarray:
    """Containing triangle for each point (brute force over all triangles)."""
    v = mesh.vertices
    tri = mesh.triangles
    a, b, c = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    bc, ca, ab = np.cross(b, c), np.cross(c, a), np.cross(a, b)
    out = np.empty(len(points), dtype=np.int64)
    for i, p in enumerate(np.atleast_2d(points)):
        d = np.stack([bc @ p, ca @ p, ab @ p], axis=1)
        ok = np.flatnonzero(np.all(d >= -1e-15, axis=1) & (d.sum(axis=1) > 0))
        if len(ok) == 0:
            raise IntegratorError(f"point {tuple(p)} could not be located on the mesh")
        out[i] = ok[0]
    return out


@dataclass(frozen=True)
class FlowSpec:
    """Autonomous Hamiltonian flow of ``generator`` for ``duration`` with fixed RK4 steps."""

    generator: ScalarField
    duration: float
    step_size: float = 0.005
    project: bool = True

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        if self.duration > 0 and self.step_size > self.duration:
            object.__setattr__(self, "step_size", float(self.duration))

    @property
    def n_steps(self) -> int:
        if self.duration == 0:
            return 0
        return max(1, math.ceil(self.duration / self.step_size - 1e-9))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    step_drift: float
    conservation_residual: float


@dataclass(frozen=True)
class _BatchResult:
    final: np.ndarray
    final_tri: np.ndarray
    averages: np.ndarray
    step_drift: np.ndarray
    conservation_residual: np.ndarray
    path: np.ndarray


def _run(spec: FlowSpec, starts, start_tri, avg_fields=(), record=False, drift_check=True) -> _BatchResult:
    G = spec.generator
    mesh = G.mesh
    n = spec.n_steps
    h = spec.duration / n if n else 0.0
    vecs = hamiltonian_vector_field(G).vectors
    avg = np.ascontiguousarray(np.array([f.values for f in avg_fields]).reshape(len(avg_fields), mesh.n_vertices))
    out = _flow_batch(
        np.ascontiguousarray(starts, dtype=float), np.ascontiguousarray(start_tri, dtype=np.int64),
        h, n, mesh.vertices, mesh.triangles, mesh.triangle_neighbors, np.ascontiguousarray(vecs),
        G.values, np.ascontiguousarray(triangle_gradients(G)), np.ascontiguousarray(G.gradient.vectors), avg, spec.project, record,
    )
    res = _BatchResult(*out)
    if np.any(res.final_tri < 0):
        bad = int(np.flatnonzero(res.final_tri < 0)[0])
        raise IntegratorError(f"point location failed on trajectory {bad}")
    if drift_check:
        scale = max(oscillation(G), 1e-300)
        worst_step = float(res.step_drift.max(initial=0.0))
        if not spec.project and worst_step > STEP_DRIFT_BUDGET * scale:
            raise IntegratorError(
                f"per-step generator drift {worst_step:.3e} exceeds budget; use a smaller step than {h:g}")
        allowed = STEP_DRIFT_BUDGET * scale * (1.0 + spec.duration)
        worst = float(res.conservation_residual.max(initial=0.0))
        if worst > allowed:
            raise IntegratorError(
                f"generator drift {worst:.3e} exceeds budget {allowed:.3e}; use a smaller step than {h:g}")
    return res


def integrate_flow(spec: FlowSpec, y0) -> Trajectory:
    """Trajectory of ``y0`` under the flow of ``spec.generator``."""
    y0 = np.asarray(y0, dtype=float)
    if abs(np.linalg.norm(y0) - 1.0) > 1e-9:
        raise ValueError("initial point must lie on the unit sphere")
    mesh = spec.generator.mesh
    tri = locate_points(mesh, y0[None, :])
    res = _run(spec, y0[None, :], tri, record=True)
    n = spec.n_steps
    times = np.linspace(0.0, spec.duration, n + 1)
    return Trajectory(times, res.path[0], float(res.step_drift[0]), float(res.conservation_residual[0]))


def flow_points(spec: FlowSpec, vertex_ids=None) -> tuple[np.ndarray, np.ndarray, float]:
    """Images of mesh vertices under the time-``duration`` map; returns (points, triangles, residual)."""
    mesh = spec.generator.mesh
    ids = np.arange(mesh.n_vertices) if vertex_ids is None else np.asarray(vertex_ids)
    res = _run(spec, mesh.vertices[ids], mesh.vertex_triangle[ids])
    return res.final, res.final_tri, float(res.conservation_residual.max(initial=0.0))


def interpolate(field: ScalarField, points: np.ndarray, hint=None) -> np.ndarray:
    mesh = field.mesh
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    if hint is None:
        hint = locate_points(mesh, points)
    return _interpolate(points, np.asarray(hint, dtype=np.int64), mesh.vertices, mesh.triangles,
                        mesh.triangle_neighbors, field.values)


@dataclass(frozen=True)
class CompositionResidual:
    t: float
    residual: float
    bound: float
    conservation_residual: float
    satisfied: bool


def flow_composition_residual(F: ScalarField, G: ScalarField, t: float, step_size: float = 0.005,
                              bracket: float | None = None) -> CompositionResidual:
    """``max_v |G(f_t v) - G(v)|`` for the flow ``f_t`` of ``F`` against ``t * ||{F, G}||``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    check_same_mesh(F, G)
    if bracket is None:
        bracket = bracket_norm(F, G)
    bound = t * bracket
    if t == 0:
        return CompositionResidual(0.0, 0.0, 0.0, 0.0, True)
    pts, tri, cons = flow_points(FlowSpec(F, t, step_size))
    moved = interpolate(G, pts, tri)
    residual = float(np.max(np.abs(moved - G.values)))
    return CompositionResidual(t, residual, bound, cons, residual <= bound + 3 * cons)


def sample_vertices(mesh, sample_level: int | None) -> np.ndarray:
    """Vertex ids used as initial points: all, or those of a coarser nested icosphere."""
    if sample_level is None or sample_level >= mesh.subdivision_level:
        return np.arange(mesh.n_vertices)
    if mesh.subdivision_level < 0:
        raise ValueError("sample_level needs an icosphere mesh")
    return np.arange(10 * 4 ** sample_level + 2)


@dataclass(frozen=True)
class MeasurementReport:
    """Outcome of one simulated pointer measurement.

    ``F1_out``/``F2_out`` hold the measured time averages at ``sample`` (vertex ids).
    """

    T: float
    epsilon: float
    F1_out: np.ndarray
    F2_out: np.ndarray
    sample: np.ndarray
    delta: float
    delta_2: float
    bound: float
    conservation_residual: float
    step_drift: float

    @property
    def satisfied(self) -> bool:
        return self.delta >= self.bound - 3 * self.conservation_residual

    def as_row(self) -> dict:
        return {"T": self.T, "epsilon": self.epsilon, "delta": self.delta, "bound": self.bound,
                "satisfied": self.satisfied, "conservation_residual": self.conservation_residual}


def measurement_bound(F1: ScalarField, F2: ScalarField, T: float, epsilon: float,
                      cfg: QuasiStateConfig = QuasiStateConfig(), pi: float | None = None) -> float:
    """``Pi/2 - sqrt(C / (T eps)) * sqrt(min ||F_i - <F_i>||)``; negative values are vacuous."""
    if not T > 0:
        raise ValueError("T must be positive")
    if not epsilon > 0:
        raise ValueError("the bound is undefined for epsilon = 0")
    check_same_mesh(F1, F2)
    if pi is None:
        pi = pi_functional(F1, F2)
    spread = min(uniform_norm(F1 - mean_value(F1)), uniform_norm(F2 - mean_value(F2)))
    return 0.5 * pi - math.sqrt(cfg.defect_C / (T * epsilon)) * math.sqrt(spread)


def simulate_measurement(F1: ScalarField, F2: ScalarField, T: float, epsilon: float,
                         step_size: float = 0.005, sample_level: int | None = None,
                         cfg: QuasiStateConfig = QuasiStateConfig(), pi: float | None = None,
                         project: bool = True, with_bound: bool = True) -> MeasurementReport:
    """Run the pointer model from every sampled vertex and measure its error.

    The pointer reading is the average of ``F_i`` along the flow of
    ``F1 + F2`` for flow time ``epsilon * T``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    mesh = check_same_mesh(F1, F2)
    ids = sample_vertices(mesh, sample_level)
    bound = measurement_bound(F1, F2, T, epsilon, cfg, pi) if (with_bound and epsilon > 0) else math.nan
    if epsilon == 0:
        out1, out2 = F1.values[ids].copy(), F2.values[ids].copy()
        return MeasurementReport(T, 0.0, out1, out2, ids, 0.0, 0.0, bound, 0.0, 0.0)
    spec = FlowSpec(F1 + F2, epsilon * T, step_size, project)
    res = _run(spec, mesh.vertices[ids], mesh.vertex_triangle[ids], avg_fields=(F1, F2))
    out1, out2 = res.averages[:, 0], res.averages[:, 1]
    d1 = float(np.max(np.abs(out1 - F1.values[ids])))
    d2 = float(np.max(np.abs(out2 - F2.values[ids])))
    return MeasurementReport(T, epsilon, out1, out2, ids, d1, d2, bound,
                             float(res.conservation_residual.max()), float(res.step_drift.max()))


@dataclass(frozen=True)
class ScalingResiduals:
    time_rescaling: float
    amplitude_rescaling: float
    E: float


def scaling_checks(F1: ScalarField, F2: ScalarField, T: float, epsilon: float, E: float,
                   step_size: float = 0.005, sample_level: int | None = None) -> ScalingResiduals:
    """Residuals of ``D(T,e,F) = D(eT,1,F)`` and ``D(T,e,E F) = E D(E T,e,F)``."""
    if min(T, epsilon, E) <= 0:
        raise ValueError("T, epsilon and E must be positive")
    kw = dict(step_size=step_size, sample_level=sample_level, with_bound=False)
    base = simulate_measurement(F1, F2, T, epsilon, **kw)
    unit = simulate_measurement(F1, F2, epsilon * T, 1.0, **kw)
    if E == 1.0:
        amp = 0.0
    else:
        # E G moves E times faster: step h / E gives the same discrete orbit as step h for G.
        scaled = simulate_measurement(E * F1, E * F2, T, epsilon, **{**kw, "step_size": step_size / E})
        stretched = simulate_measurement(F1, F2, E * T, epsilon, **kw)
        amp = abs(scaled.delta - E * stretched.delta)
    return ScalingResiduals(abs(base.delta - unit.delta), amp, E)
