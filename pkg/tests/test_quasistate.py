import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphere_qs.fieldgen import random_smooth_field
from sphere_qs.geometry import ScalarField, build_icosphere, sample_field, uniform_norm
from sphere_qs.partitions import cap_bump
from sphere_qs.quasistate import (QuasiStateConfig, bracket_inequality_report, check_median, median_point,
                                  pi_functional, robustness_report, upsilon_lower_bound, zeta, zeta_bruteforce)
from sphere_qs.reeb import TreePoint, build_contour_tree, complement_max_area

from conftest import coords

MESH3 = build_icosphere(3)


def test_config_validation():
    assert QuasiStateConfig().defect_C == 0.5
    for bad in (0, -1, math.inf, math.nan):
        with pytest.raises(ValueError):
            QuasiStateConfig(bad)


def test_zeta_worked_examples(mesh6):
    x, y, z = coords(mesh6)
    assert zeta(z) == pytest.approx(0, abs=1e-3)
    for f in (x * x, y * y, z * z):
        assert zeta(f) == pytest.approx(0, abs=1e-3)
    assert zeta(x * x + y * y) == pytest.approx(1, abs=1e-3)
    assert pi_functional(x * x, y * y) == pytest.approx(1, abs=1e-3)


@pytest.mark.parametrize("c", [-2.5, 0.0, 0.7, 1e6])
def test_zeta_of_constant(mesh4, c):
    assert zeta(ScalarField.constant(mesh4, c)) == c


def test_median_balances_single_edge(mesh5):
    _, _, z = coords(mesh5)
    tree = build_contour_tree(z)
    p = median_point(tree)
    assert p.edge == 0
    assert check_median(tree, p) <= 0.5 + 1e-6
    assert p.level == pytest.approx(0, abs=1e-3)


def test_median_is_minimax_point(mesh4, rng):
    F = random_smooth_field(mesh4, rng)
    tree = build_contour_tree(F)
    p = median_point(tree)
    best = check_median(tree, p)
    for i in rng.choice(tree.n_nodes, size=min(20, tree.n_nodes), replace=False):
        assert complement_max_area(tree, TreePoint(tree.node_level[i], node=int(i))) >= best - 1e-12


def test_tie_gives_midpoint_and_odd_symmetry(mesh5):
    x, _, _ = coords(mesh5)
    F = x * x
    assert zeta(-F) == pytest.approx(-zeta(F), abs=1e-15)


def test_bruteforce_examples(mesh4):
    _, _, z = coords(mesh4)
    assert zeta_bruteforce(z, 64) == pytest.approx(0, abs=2 / 63)
    assert zeta_bruteforce(ScalarField.constant(mesh4, 3.25), 16) == 3.25
    with pytest.raises(ValueError):
        zeta_bruteforce(z, 1)


def test_bruteforce_agrees_on_random_fields(mesh4):
    rng = np.random.default_rng(7)
    for _ in range(10):
        F = random_smooth_field(mesh4, rng)
        assert abs(zeta(F) - zeta_bruteforce(F, 512)) <= 1e-3


def test_pi_trivial_cases(mesh4, rng):
    F = random_smooth_field(mesh4, rng)
    assert pi_functional(F, F) == pytest.approx(0, abs=1e-12)
    assert pi_functional(F, ScalarField.constant(mesh4, 2.0)) == pytest.approx(0, abs=1e-12)
    assert pi_functional(F, random_smooth_field(mesh4, rng)) >= 0


def test_bracket_inequality_examples(mesh6):
    x, y, _ = coords(mesh6)
    r = bracket_inequality_report(x * x, y * y, QuasiStateConfig(2.0))
    assert r.pi == pytest.approx(1, abs=0.05)
    assert r.bound == pytest.approx(math.sqrt(4 * 9.674), rel=0.02)
    assert r.satisfied
    assert set(r.as_row()) == {"pi", "bracket_norm", "bound", "C", "satisfied"}
    same = bracket_inequality_report(x * x, x * x)
    assert same.pi == pytest.approx(0, abs=1e-12) and same.bound == 0 and same.satisfied
    assert math.isinf(same.implied_C)


def test_robustness_examples(mesh6):
    x, y, _ = coords(mesh6)
    eps = [0.05 * k for k in range(1, 10)]
    r = robustness_report(x * x, y * y, QuasiStateConfig(2.0), eps)
    assert r.eps_max_lower == pytest.approx(0.5, abs=0.025)
    for e in eps:
        assert r.upsilon_curve[e] == pytest.approx((r.pi_value - 2 * e) ** 2 / 4, rel=1e-12)
        assert r.upsilon_curve[e] == pytest.approx((1 - 2 * e) ** 2 / 4, rel=0.10)
    r_half = robustness_report(x * x, y * y, QuasiStateConfig(0.5), pi=r.pi_value)
    assert r_half.upsilon_lower == pytest.approx(1, abs=0.05)


def test_robustness_curve_invariants():
    pi, C = 0.8, 0.5
    eps = np.linspace(0, 0.6, 61)
    vals = [upsilon_lower_bound(pi, e, C) for e in eps]
    assert all(v >= 0 for v in vals)
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[0] == pytest.approx(pi ** 2 / (2 * C))
    assert upsilon_lower_bound(pi, 0.4, C) == 0
    with pytest.raises(ValueError):
        upsilon_lower_bound(pi, -0.1, C)


def test_commuting_pair_is_vacuous(mesh4):
    _, _, z = coords(mesh4)
    r = robustness_report(z, 2 * z, eps_samples=[0.1])
    assert r.vacuous and r.upsilon_lower == 0 and r.eps_max_lower == 0


seeds = st.integers(0, 2 ** 32 - 1)
reals = st.floats(-4, 4, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(seeds, reals.filter(lambda a: abs(a) > 1e-3), reals)
def test_quasi_linearity(seed, a, b):
    F = random_smooth_field(MESH3, np.random.default_rng(seed))
    assert abs(zeta(a * F + b) - (a * zeta(F) + b)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_monotonicity_and_lipschitz(seed):
    rng = np.random.default_rng(seed)
    F = random_smooth_field(MESH3, rng)
    P = ScalarField(MESH3, np.abs(random_smooth_field(MESH3, rng).values))
    assert zeta(F) <= zeta(F + P) + 1e-9
    G = random_smooth_field(MESH3, rng)
    assert abs(zeta(F) - zeta(G)) <= uniform_norm(F - G) + 1e-9
    assert abs(pi_functional(F, G) - pi_functional(F + 0.1 * P, G)) <= 2 * uniform_norm(0.1 * P) + 1e-9


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_composition_with_monotone_functions(seed):
    F = random_smooth_field(MESH3, np.random.default_rng(seed))
    z = zeta(F)
    assert zeta(F.map(lambda t: t ** 3 + t)) == pytest.approx(z ** 3 + z, abs=0.02)
    assert zeta(F.map(np.exp)) == pytest.approx(math.exp(z), abs=0.02)


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.2, math.acos(1 - 2 * 0.45)), st.floats(-5, 5))
def test_vanishing_for_small_supports(seed, radius, amp):
    rng = np.random.default_rng(seed)
    mesh = build_icosphere(4)
    c = rng.normal(size=3)
    H = ScalarField(mesh, amp * cap_bump(mesh.vertices, c, radius) * (1 + rng.random(mesh.n_vertices)))
    assert zeta(H) == pytest.approx(0, abs=0.02)


def test_median_postcondition_on_many_fields(mesh4):
    rng = np.random.default_rng(99)
    for _ in range(30):
        tree = build_contour_tree(random_smooth_field(mesh4, rng))
        assert check_median(tree, median_point(tree)) <= 0.5 + 1e-6

