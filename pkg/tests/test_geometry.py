import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphere_qs.errors import EvaluationError, MeshError
from sphere_qs.geometry import (FOUR_PI, ScalarField, ambient_gradient, bracket_norm, build_icosphere,
                                check_same_mesh, hamiltonian_vector_field, mean_value, mesh_from_arrays,
                                oscillation, poisson_bracket, sample_field, uniform_norm)

from conftest import coords

BRACKET_X2_Y2 = 16 * math.pi / (3 * math.sqrt(3))


@pytest.mark.parametrize("level", range(0, 6))
def test_icosphere_counts_and_invariants(level):
    m = build_icosphere(level)
    assert m.n_vertices == 10 * 4 ** level + 2
    assert m.n_triangles == 20 * 4 ** level
    assert m.euler_characteristic == 2
    assert np.max(np.abs(np.linalg.norm(m.vertices, axis=1) - 1)) < 1e-12
    assert abs(m.triangle_areas.sum() - 1) < 1e-10
    assert abs(m.vertex_weights.sum() - 1) < 1e-10
    m.validate()


def test_icosphere_vertices_are_nested():
    coarse, fine = build_icosphere(2), build_icosphere(4)
    np.testing.assert_array_equal(fine.vertices[:coarse.n_vertices], coarse.vertices)


def test_triangles_are_outward_oriented(mesh4):
    a, b, c = (mesh4.vertices[mesh4.triangles[:, k]] for k in range(3))
    assert np.all(np.einsum("ij,ij->i", a, np.cross(b - a, c - a)) > 0)


@pytest.mark.parametrize("level", [-1, 10, 2.5, True])
def test_icosphere_rejects_bad_level(level):
    with pytest.raises(ValueError):
        build_icosphere(level)


def test_mesh_arrays_are_read_only(mesh4):
    with pytest.raises(ValueError):
        mesh4.vertices[0, 0] = 2.0


def test_degenerate_triangle_is_a_mesh_error():
    m = build_icosphere(0)
    verts = m.vertices.copy()
    verts[1] = verts[0]
    bad = mesh_from_arrays(verts, m.triangles)
    with pytest.raises(MeshError):
        ambient_gradient(ScalarField(bad, verts[:, 2].copy()))


def test_validate_catches_wrong_weights(mesh4):
    from sphere_qs.geometry import SphereMesh
    broken = SphereMesh(mesh4.vertices, mesh4.triangles, mesh4.triangle_areas, mesh4.vertex_weights * 2, 4)
    with pytest.raises(MeshError):
        broken.validate()


def test_sample_field_examples(mesh4):
    one = sample_field(mesh4, lambda x, y, z: 1.0)
    assert np.all(one.values == 1)
    x2 = sample_field(mesh4, lambda x, y, z: x ** 2)
    north = np.argmax(mesh4.vertices[:, 2])
    east = np.argmax(mesh4.vertices[:, 0])
    assert x2.values[north] == pytest.approx(0, abs=1e-15)
    assert x2.values[east] == pytest.approx(1)
    r = sample_field(mesh4, lambda x, y, z: x ** 2 + y ** 2)
    np.testing.assert_allclose(r.values, 1 - mesh4.vertices[:, 2] ** 2, atol=1e-14)


def test_sample_field_reports_vertex_of_non_finite_value(mesh4):
    with pytest.raises(EvaluationError) as info:
        sample_field(mesh4, lambda x, y, z: 1.0 / (z - mesh4.vertices[7, 2]))
    assert mesh4.vertices[info.value.vertex, 2] == mesh4.vertices[7, 2]


def test_scalar_field_rejects_bad_values(mesh4):
    with pytest.raises(EvaluationError):
        ScalarField(mesh4, np.full(mesh4.n_vertices, np.nan))
    with pytest.raises(ValueError):
        ScalarField(mesh4, np.zeros(3))


def test_means_norms_oscillation(mesh5):
    x, y, z = coords(mesh5)
    assert mean_value(ScalarField.constant(mesh5, 1.0)) == pytest.approx(1, abs=1e-12)
    assert abs(mean_value(z)) < 1e-10
    assert mean_value(x * x) == pytest.approx(1 / 3, abs=1e-6)
    assert uniform_norm(z) == pytest.approx(1)
    assert oscillation(z) == pytest.approx(2)
    assert uniform_norm(x * x - 1 / 3) == pytest.approx(2 / 3)
    zero = ScalarField.constant(mesh5, 0.0)
    assert uniform_norm(zero) == 0 and oscillation(zero) == 0
    assert uniform_norm(-3.5 * z) == pytest.approx(3.5 * uniform_norm(z))


def test_gradient_examples(mesh5):
    _, _, z = coords(mesh5)
    assert np.all(ambient_gradient(ScalarField.constant(mesh5, 2.0)).vectors == 0)
    g = ambient_gradient(z).vectors
    east = int(np.argmax(mesh5.vertices[:, 0]))
    north = int(np.argmax(mesh5.vertices[:, 2]))
    np.testing.assert_allclose(g[east], [0, 0, 1], atol=5e-3)
    assert np.linalg.norm(g[north]) < 1e-12


def test_gradient_is_tangent(mesh5, rng):
    F = ScalarField(mesh5, rng.normal(size=mesh5.n_vertices))
    assert F.gradient.tangency_defect() < 1e-8


def test_hamiltonian_field_of_z_is_a_rotation(mesh5):
    _, _, z = coords(mesh5)
    X = hamiltonian_vector_field(z)
    p = mesh5.vertices
    sin_theta = np.sqrt(1 - p[:, 2] ** 2)
    np.testing.assert_allclose(X.norms(), FOUR_PI * sin_theta, atol=FOUR_PI * 4e-3)
    azimuthal = np.cross([0, 0, 1], p)
    assert np.all(np.einsum("ij,ij->i", X.vectors, azimuthal) >= -1e-12)
    assert X.tangency_defect() < 1e-8


def test_hamiltonian_field_preserves_generator(mesh4, rng):
    G = ScalarField(mesh4, rng.normal(size=mesh4.n_vertices))
    dot = np.einsum("ij,ij->i", hamiltonian_vector_field(G).vectors, G.gradient.vectors)
    assert np.max(np.abs(dot)) < 1e-9


def test_bracket_is_derivative_along_hamiltonian_field(mesh4, rng):
    F = ScalarField(mesh4, rng.normal(size=mesh4.n_vertices))
    G = ScalarField(mesh4, rng.normal(size=mesh4.n_vertices))
    dF = np.einsum("ij,ij->i", F.gradient.vectors, hamiltonian_vector_field(G).vectors)
    np.testing.assert_allclose(poisson_bracket(F, G).values, dF, atol=1e-9 * np.max(np.abs(dF)))


def test_bracket_of_coordinates(mesh6):
    x, y, z = coords(mesh6)
    np.testing.assert_allclose(poisson_bracket(x, y).values, FOUR_PI * z.values, atol=FOUR_PI * 2e-3)


def test_bracket_x2_y2_norm(mesh6):
    x, y, z = coords(mesh6)
    norm = bracket_norm(x * x, y * y)
    assert norm == pytest.approx(BRACKET_X2_Y2, rel=0.02)
    assert norm > 0.25


def test_bracket_against_analytic_trig_fields(mesh6):
    x, y, z = coords(mesh6)
    F = x.map(np.sin) + y * z
    G = (z * z).map(np.cos) + x
    # grad of the ambient extensions, projected onto the tangent plane, gives the exact bracket
    p = mesh6.vertices
    gF = np.column_stack([np.cos(p[:, 0]), p[:, 2], p[:, 1]])
    gG = np.column_stack([np.ones(len(p)), np.zeros(len(p)), -2 * p[:, 2] * np.sin(p[:, 2] ** 2)])
    exact = FOUR_PI * np.einsum("ij,ij->i", p, np.cross(gF, gG))
    err = np.max(np.abs(poisson_bracket(F, G).values - exact))
    assert err <= 0.02 * np.max(np.abs(exact))


def test_bracket_mesh_mismatch(mesh4, mesh5):
    with pytest.raises(ValueError):
        poisson_bracket(ScalarField.constant(mesh4, 1), ScalarField.constant(mesh5, 1))
    with pytest.raises(ValueError):
        check_same_mesh(ScalarField.constant(mesh4, 1), ScalarField.constant(mesh5, 1))


def test_leibniz_defect_decreases_with_refinement():
    defects = []
    for level in (4, 5, 6):
        x, y, z = coords(build_icosphere(level))
        F, G, H = x + z * z, y * z, x * y + z
        d = poisson_bracket(F * G, H) - F * poisson_bracket(G, H) - G * poisson_bracket(F, H)
        defects.append(uniform_norm(d))
    assert defects[0] > defects[1] > defects[2]


_coef = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@settings(max_examples=30, deadline=None)
@given(_coef, _coef, st.integers(0, 2 ** 32 - 1))
def test_bracket_bilinear_and_antisymmetric(a, b, seed):
    mesh = build_icosphere(3)
    rng = np.random.default_rng(seed)
    F, F2, G = (ScalarField(mesh, rng.normal(size=mesh.n_vertices)) for _ in range(3))
    lhs = poisson_bracket(a * F + b * F2, G).values
    rhs = a * poisson_bracket(F, G).values + b * poisson_bracket(F2, G).values
    scale = max(1.0, np.max(np.abs(rhs)))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * scale * 10)
    assert np.all(poisson_bracket(F, G).values + poisson_bracket(G, F).values == 0)
    assert np.all(poisson_bracket(F, F).values == 0)
