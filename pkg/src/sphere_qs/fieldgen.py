"""Seeded random test fields."""

from __future__ import annotations

import itertools

import numpy as np

from .geometry import ScalarField, SphereMesh


def monomial_exponents(degree: int) -> list[tuple[int, int, int]]:
    """Exponents ``(a, b, c)`` of ``x^a y^b z^c`` with ``a + b + c <= degree``."""
    return [e for e in itertools.product(range(degree + 1), repeat=3) if sum(e) <= degree]


def random_polynomial_field(mesh: SphereMesh, rng: np.random.Generator, degree: int = 3,
                            scale: float = 1.0) -> ScalarField:
    """Polynomial in ``x, y, z`` with independent normal coefficients."""
    x, y, z = mesh.vertices.T
    vals = np.zeros(mesh.n_vertices)
    for (a, b, c) in monomial_exponents(degree):
        vals += scale * rng.normal() * x ** a * y ** b * z ** c
    return ScalarField(mesh, vals)


def random_smooth_field(mesh: SphereMesh, rng: np.random.Generator, n_bumps: int = 3) -> ScalarField:
    """Cubic polynomial plus Gaussian bumps of random sign, centre and width."""
    F = random_polynomial_field(mesh, rng, 3, 0.5)
    vals = F.values.copy()
    for _ in range(n_bumps):
        c = rng.normal(size=3)
        c /= np.linalg.norm(c)
        width = rng.uniform(0.3, 0.8)
        d2 = np.sum((mesh.vertices - c) ** 2, axis=1)
        vals += rng.normal() * np.exp(-d2 / width ** 2)
    return ScalarField(mesh, vals)
