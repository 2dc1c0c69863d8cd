import math

import numpy as np
import pytest

from sphere_qs.errors import ConstructionError
from sphere_qs.formats import parse_csv
from sphere_qs.geometry import ScalarField
from sphere_qs.partitions import (Cap, PartitionOfUnity, build_cap_partition, cap_area, cap_bump,
                                  duplicate_partition, fibonacci_lattice, geodesic_distance, max_pairwise_bracket,
                                  proof_lower_bound, scaling_experiment)
from sphere_qs.quasistate import QuasiStateConfig, zeta


@pytest.fixture(scope="module")
def p8(request):
    from sphere_qs.geometry import build_icosphere
    return build_cap_partition(build_icosphere(5), 8, 0.3)


def test_fibonacci_lattice_is_on_the_sphere():
    pts = fibonacci_lattice(50)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1)
    with pytest.raises(ValueError):
        fibonacci_lattice(0)


def test_bump_profile_vanishes_smoothly_at_the_rim():
    center = np.array([0.0, 0.0, 1.0])
    r = 0.5
    d = np.array([0.0, 0.25, r - 1e-3, r, r + 0.1])
    pts = np.column_stack([np.sin(d), np.zeros_like(d), np.cos(d)])
    vals = cap_bump(pts, center, r)
    assert vals[0] == pytest.approx(1)
    assert vals[1] == pytest.approx((1 - 0.25) ** 3)
    assert 0 < vals[2] < 1e-7
    assert vals[3] == 0 and vals[4] == 0
    with pytest.raises(ValueError):
        cap_bump(pts, center, 0.0)


def test_single_cap_cannot_dominate_one(mesh4):
    with pytest.raises(ConstructionError):
        build_cap_partition(mesh4, 1)


def test_too_few_caps_for_the_area_constraint(mesh4):
    with pytest.raises(ConstructionError, match="1/2"):
        build_cap_partition(mesh4, 3)


def test_partition_invariants(p8):
    assert p8.N == 8
    p8.check()
    assert np.all(p8.total() >= 1 - 1e-9)
    for rho, cap in zip(p8.members, p8.support_caps):
        assert cap.area < 0.5
        assert np.all(rho.values >= 0)
        outside = geodesic_distance(p8.mesh.vertices, cap.center) >= cap.radius
        assert np.all(rho.values[outside] == 0)


def test_members_have_vanishing_quasi_state(p8):
    for rho in p8.members:
        assert zeta(rho) == pytest.approx(0, abs=0.02)


def test_disjoint_caps_commute(mesh4):
    caps = (Cap((0.0, 0.0, 1.0), 0.4), Cap((0.0, 0.0, -1.0), 0.4))
    members = tuple(ScalarField(mesh4, cap_bump(mesh4.vertices, c.center, c.radius)) for c in caps)
    assert max_pairwise_bracket(PartitionOfUnity(members, caps)) == 0


def test_duplication(p8):
    assert duplicate_partition(p8, 1) is p8
    d2 = duplicate_partition(p8, 2)
    assert d2.N == 16
    np.testing.assert_allclose(d2.total(), p8.total(), rtol=1e-15)
    a = max_pairwise_bracket(p8)
    assert a > 0
    for m in (2, 4, 8):
        am = max_pairwise_bracket(duplicate_partition(p8, m))
        assert abs(am * m * m / a - 1) < 1e-10
    with pytest.raises(ValueError):
        duplicate_partition(p8, 0)


def test_measured_bracket_exceeds_proof_bound(p8):
    assert max_pairwise_bracket(p8) >= proof_lower_bound(8, QuasiStateConfig(0.5))


def test_proof_bound_values():
    half = QuasiStateConfig(0.5)
    assert proof_lower_bound(2, half) == 1
    assert proof_lower_bound(3, half) == pytest.approx(1 / (1 + math.sqrt(2)) ** 2)
    assert proof_lower_bound(3, half) == pytest.approx(0.1716, abs=1e-4)
    N = 10 ** 5
    assert proof_lower_bound(N, half) * N ** 3 / (9 / 8 / 0.5) == pytest.approx(1, rel=1e-3)
    with pytest.raises(ValueError):
        proof_lower_bound(1)


def test_cap_area():
    assert cap_area(math.pi / 2) == pytest.approx(0.5)
    assert cap_area(math.pi) == pytest.approx(1)


def test_scaling_experiment(mesh4):
    exp = scaling_experiment(mesh4, [8], [1, 2, 4, 8])
    assert exp.all_satisfied
    assert exp.slopes[8] == pytest.approx(-2, abs=0.15)
    rows = parse_csv(exp.to_csv())
    assert list(rows[0]) == ["N", "m", "N_eff", "measured_max_bracket", "proof_bound", "satisfied"]
    assert [int(r["N_eff"]) for r in rows] == [8, 16, 32, 64]
    with pytest.raises(ValueError):
        scaling_experiment(mesh4, [], [1])
