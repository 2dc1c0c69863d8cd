import math

import numpy as np
import pytest

from sphere_qs.dynamics import (FlowSpec, flow_composition_residual, integrate_flow, interpolate,
                                measurement_bound, sample_vertices, scaling_checks, simulate_measurement)
from sphere_qs.errors import IntegratorError
from sphere_qs.geometry import ScalarField, build_icosphere, sample_field
from sphere_qs.quasistate import QuasiStateConfig

from conftest import coords

QUARTER_TURN = (math.pi / 2) / (4 * math.pi)


def test_constant_generator_does_not_move(mesh4):
    y0 = np.array([0.6, 0.0, 0.8])
    tr = integrate_flow(FlowSpec(ScalarField.constant(mesh4, 3.0), 1.0, 0.01), y0)
    np.testing.assert_array_equal(tr.points, np.broadcast_to(y0, tr.points.shape))


def test_quarter_turn_about_the_pole():
    mesh = build_icosphere(8)
    _, _, z = coords(mesh)
    tr = integrate_flow(FlowSpec(z, QUARTER_TURN, 0.001), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(tr.points[-1], [0.0, 1.0, 0.0], atol=1e-5)
    assert tr.times[-1] == pytest.approx(QUARTER_TURN)


def test_quarter_turn_error_shrinks_quadratically():
    errs = []
    for level in (5, 6, 7):
        _, _, z = coords(build_icosphere(level))
        tr = integrate_flow(FlowSpec(z, QUARTER_TURN, 0.001), [1.0, 0.0, 0.0])
        errs.append(np.max(np.abs(tr.points[-1] - [0, 1, 0])))
    assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3


def test_generator_is_conserved(mesh5):
    x, y, z = coords(mesh5)
    G = x * x + 0.5 * y * z
    tr = integrate_flow(FlowSpec(G, 0.5, 0.005), [0.48, 0.6, 0.64])
    vals = interpolate(G, tr.points)
    assert np.max(np.abs(vals - vals[0])) <= 1e-6 * (G.values.max() - G.values.min()) * 1.5
    assert np.allclose(np.linalg.norm(tr.points, axis=1), 1, atol=1e-14)


def test_unprojected_steps_report_drift(mesh4):
    x, _, _ = coords(mesh4)
    with pytest.raises(IntegratorError, match="smaller step"):
        integrate_flow(FlowSpec(x * x, 0.5, 0.01, project=False), [0.6, 0.8, 0.0])


def test_flow_spec_validation(mesh4):
    _, _, z = coords(mesh4)
    with pytest.raises(ValueError):
        FlowSpec(z, 1.0, 0.0)
    with pytest.raises(ValueError):
        FlowSpec(z, -1.0, 0.1)
    assert FlowSpec(z, 0.01, 0.1).step_size == 0.01
    assert FlowSpec(z, 0.0).n_steps == 0
    with pytest.raises(ValueError):
        integrate_flow(FlowSpec(z, 1.0), [1.0, 1.0, 0.0])


def test_interpolate_reproduces_vertex_values(mesh4, rng):
    F = ScalarField(mesh4, rng.normal(size=mesh4.n_vertices))
    np.testing.assert_allclose(interpolate(F, mesh4.vertices), F.values, atol=1e-12)


def test_flow_composition_examples(mesh5):
    x, y, z = coords(mesh5)
    zero = flow_composition_residual(x * x, z, 0.0)
    assert zero.residual == 0 and zero.bound == 0 and zero.satisfied
    commuting = flow_composition_residual(z, 2 * z, 0.3)
    assert commuting.residual < 1e-9 and commuting.satisfied
    r = flow_composition_residual(x * x, y * y, 0.1)
    assert r.satisfied and r.residual <= r.bound
    with pytest.raises(ValueError):
        flow_composition_residual(x, z, -1.0)


def test_measurement_bound_examples(mesh6):
    x, y, z = coords(mesh6)
    cfg = QuasiStateConfig(0.5)
    assert measurement_bound(x * x, y * y, 200, 1, cfg) == pytest.approx(0.459, abs=2e-3)
    assert measurement_bound(x * x, y * y, 1e12, 1, cfg) == pytest.approx(0.5, abs=2e-3)
    assert measurement_bound(z, 2 * z, 50, 1, cfg) <= 0
    with pytest.raises(ValueError):
        measurement_bound(x * x, y * y, 50, 0.0, cfg)


def test_ideal_pointer_is_exact(mesh5):
    x, y, _ = coords(mesh5)
    r = simulate_measurement(x * x, y * y, 50, 0.0)
    assert r.delta == 0.0 and r.delta_2 == 0.0
    np.testing.assert_array_equal(r.F1_out, (x * x).values)


def test_commuting_observables_are_measured_exactly(mesh5):
    _, _, z = coords(mesh5)
    r = simulate_measurement(z, 2 * z, 20, 1.0, sample_level=3)
    assert r.delta < 1e-9


def test_measurement_invariants(mesh5):
    x, y, _ = coords(mesh5)
    F1, F2 = x * x, y * y
    r = simulate_measurement(F1, F2, 10, 0.5, sample_level=3)
    np.testing.assert_allclose(r.F1_out + r.F2_out, (F1 + F2).values[r.sample], atol=1e-4)
    assert abs(r.delta - r.delta_2) <= 1e-4
    assert r.delta >= 0
    assert r.satisfied
    assert set(r.as_row()) == {"T", "epsilon", "delta", "bound", "satisfied", "conservation_residual"}


def test_step_halving_changes_delta_little(mesh6):
    x, y, _ = coords(mesh6)
    a = simulate_measurement(x * x, y * y, 50, 0.5, step_size=0.01, sample_level=3, pi=1.0)
    b = simulate_measurement(x * x, y * y, 50, 0.5, step_size=0.005, sample_level=3, pi=1.0)
    assert abs(a.delta - b.delta) < 1e-4


def test_scaling_identities(mesh5):
    x, y, _ = coords(mesh5)
    unit = scaling_checks(x * x, y * y, 10, 0.3, 1.0, sample_level=3)
    assert unit.amplitude_rescaling == 0
    assert unit.time_rescaling <= 1e-4
    doubled = scaling_checks(x * x, y * y, 10, 0.3, 2.0, sample_level=3)
    assert doubled.amplitude_rescaling <= 1e-4
    with pytest.raises(ValueError):
        scaling_checks(x, y, 0, 1, 1)


def test_sample_vertices_nested(mesh5):
    ids = sample_vertices(mesh5, 2)
    np.testing.assert_array_equal(mesh5.vertices[ids], build_icosphere(2).vertices)
    assert len(sample_vertices(mesh5, None)) == mesh5.n_vertices
