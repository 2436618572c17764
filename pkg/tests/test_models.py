from fractions import Fraction

import numpy as np
import pytest

from qcflow.models import (ModelKind, circle_cross_sphere, curvature_data,
                           flat_torus, geodesic_distance, injectivity_scale,
                           is_positivity_admissible, round_sphere)


def test_flat_torus_curvature_vanishes():
    d = curvature_data(flat_torus(5, 2 * np.pi))
    assert all(a == 0 for a in d.schouten_eigenvalues)
    assert d.scalar == 0 and d.q_curv == 0 and d.sigma1 == 0


def test_round_sphere_five():
    d = curvature_data(round_sphere(5))
    assert d.schouten_eigenvalues == (Fraction(1, 2),) * 5
    assert d.sigma1 == Fraction(5, 2)
    assert d.scalar == 20
    assert d.q_curv == Fraction(105, 8)


def test_product_five():
    d = curvature_data(circle_cross_sphere(5, 2 * np.pi))
    assert d.schouten_eigenvalues == (Fraction(-1, 2),) + (Fraction(1, 2),) * 4
    assert d.scalar == 12
    assert d.q_curv == Fraction(25, 8)


@pytest.mark.parametrize("n", [5, 6, 7, 8])
def test_sphere_constants_all_n(n):
    d = curvature_data(round_sphere(n))
    assert d.q_curv == Fraction(n * (n * n - 4), 8)
    assert d.scalar == n * (n - 1)


@pytest.mark.parametrize("n", [5, 6])
def test_product_constants_all_n(n):
    d = curvature_data(circle_cross_sphere(n, 2 * np.pi))
    assert d.q_curv == Fraction(n * n * (n - 4), 8)
    assert d.scalar == (n - 1) * (n - 2)


def test_bundle_internal_identities():
    for model in (round_sphere(6), circle_cross_sphere(7, np.pi)):
        d = curvature_data(model)
        n = model.dim
        assert d.sigma1 == sum(d.schouten_eigenvalues)
        assert d.sigma2 == (d.sigma1 ** 2 - sum(a * a for a in d.schouten_eigenvalues)) / 2
        assert d.q_curv == 4 * d.sigma2 + Fraction(n - 4, 2) * d.sigma1 ** 2


def test_admissibility():
    ok, _ = is_positivity_admissible(round_sphere(5))
    assert ok
    ok, why = is_positivity_admissible(flat_torus(5, 1.0))
    assert not ok and "not semi-positive" in why
    ok, _ = is_positivity_admissible(circle_cross_sphere(6, 2 * np.pi))
    assert ok
    d = curvature_data(circle_cross_sphere(6, 2 * np.pi))
    assert d.q_curv == 9 and d.scalar == 20


def test_admissible_implies_strictly_positive_scalar():
    for model in (round_sphere(5), round_sphere(8),
                  circle_cross_sphere(5, np.pi), circle_cross_sphere(6, 4 * np.pi)):
        ok, _ = is_positivity_admissible(model)
        if ok:
            assert curvature_data(model).scalar > 0


def test_geodesic_examples():
    assert geodesic_distance(round_sphere(5), 0.0, np.pi) == pytest.approx(np.pi)
    t = flat_torus(5, 2 * np.pi)
    p = np.zeros(5)
    x = np.array([np.pi, 0, 0, 0, 0])
    assert geodesic_distance(t, p, x) == pytest.approx(np.pi)
    m = circle_cross_sphere(5, 2 * np.pi)
    d = geodesic_distance(m, (0.0, 0.0), (np.pi / 2, np.pi / 2))
    assert d == pytest.approx(np.sqrt(np.pi ** 2 / 4 + np.pi ** 2 / 4))


def test_dim_guard():
    with pytest.raises(ValueError):
        round_sphere(4)


def _random_point(model, rng):
    if model.kind is ModelKind.ROUND_SPHERE:
        return rng.uniform(0, np.pi)
    if model.kind is ModelKind.FLAT_TORUS:
        return rng.uniform(0, model.sizes[0], model.dim)
    return (rng.uniform(0, model.circle_length), rng.uniform(0, np.pi))


@pytest.mark.parametrize("model", [round_sphere(5), flat_torus(5, 2 * np.pi),
                                   circle_cross_sphere(5, 2 * np.pi)])
def test_triangle_inequality(model):
    rng = np.random.default_rng(7)
    for _ in range(1000):
        a, b, c = (_random_point(model, rng) for _ in range(3))
        dab = geodesic_distance(model, a, b)
        dbc = geodesic_distance(model, b, c)
        dac = geodesic_distance(model, a, c)
        assert dac <= dab + dbc + 1e-12
        assert dab == pytest.approx(geodesic_distance(model, b, a), abs=1e-15)


def test_injectivity_scales():
    assert injectivity_scale(round_sphere(5)) == pytest.approx(np.pi)
    assert injectivity_scale(flat_torus(5, 3.0)) == pytest.approx(1.5)
    assert injectivity_scale(circle_cross_sphere(5, np.pi)) == pytest.approx(np.pi / 2)
