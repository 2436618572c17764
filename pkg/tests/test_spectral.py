import numpy as np
import pytest

from qcflow.models import circle_cross_sphere, flat_torus, round_sphere
from qcflow.spectral import (Field, Symmetry, build_discretization,
                             constant_field, derivative_nodal, from_function,
                             from_nodal, integrate, laplacian, pointwise,
                             random_band_limited, signed_power, sphere_area)

S5 = round_sphere(5)
PROD = circle_cross_sphere(5, 2 * np.pi)


def test_weights_sum_sphere():
    disc = build_discretization(S5, Symmetry.ZONAL_ONLY, 32)
    assert disc.weights.sum() == pytest.approx(np.pi ** 3, rel=1e-12)
    assert disc.n_modes == 32


def test_weights_sum_product():
    disc = build_discretization(PROD, Symmetry.CIRCLE_ONLY, 64)
    assert disc.weights.sum() == pytest.approx(2 * np.pi * 8 * np.pi ** 2 / 3, rel=1e-12)
    assert disc.n_modes == 64


def test_weights_sum_torus():
    disc = build_discretization(flat_torus(5, 2 * np.pi), Symmetry.FULL_TORUS_FOURIER, 8)
    assert disc.n_modes == 8 ** 5
    assert disc.weights.sum() == pytest.approx((2 * np.pi) ** 5, rel=1e-12)


def test_sphere_area_formula():
    # |S^m| = 2 pi^{(m+1)/2} / Gamma((m+1)/2)
    assert sphere_area(4) == pytest.approx(8 * np.pi ** 2 / 3, rel=1e-14)
    assert sphere_area(5) == pytest.approx(np.pi ** 3, rel=1e-14)


@pytest.mark.parametrize("disc", [
    build_discretization(S5, Symmetry.ZONAL_ONLY, 24),
    build_discretization(PROD, Symmetry.CIRCLE_ONLY, 24),
    build_discretization(PROD, Symmetry.CIRCLE_ZONAL_2D, (16, 12)),
])
def test_transform_roundtrip(disc):
    rng = np.random.default_rng(1)
    f = random_band_limited(disc, rng)
    c2 = disc.to_coeffs(disc.to_nodal(f.coeffs))
    assert np.max(np.abs(c2 - f.coeffs)) <= 1e-12 * max(1.0, np.max(np.abs(f.coeffs)))


def test_integrate_examples():
    disc = build_discretization(S5, Symmetry.ZONAL_ONLY, 32)
    assert integrate(constant_field(disc, 1.0)) == pytest.approx(np.pi ** 3, rel=1e-12)
    c = np.zeros(32)
    c[1] = 1.0
    assert abs(integrate(Field(disc, c))) <= 1e-12

    dp = build_discretization(PROD, Symmetry.CIRCLE_ONLY, 32)
    f = from_function(dp, np.cos)
    assert abs(integrate(f)) <= 1e-12


def test_laplacian_eigenvalues():
    disc = build_discretization(S5, Symmetry.ZONAL_ONLY, 32)
    assert np.all(laplacian(constant_field(disc, 1.0)).flat[1:] == pytest.approx(0.0, abs=1e-12))
    c = np.zeros(32)
    c[2] = 1.0
    assert laplacian(Field(disc, c)).flat[2] == pytest.approx(-12.0, rel=1e-14)

    dp = build_discretization(PROD, Symmetry.CIRCLE_ONLY, 32)
    for k in (1, 3):
        f = from_function(dp, lambda s: np.cos(k * s))
        g = laplacian(f)
        assert np.max(np.abs(g.nodal + k ** 2 * f.nodal)) <= 1e-10


def test_zonal_eigenvalue_symbolic_oracle():
    sympy = pytest.importorskip("sympy")
    th = sympy.symbols("theta")
    n = 5
    lam = sympy.Rational(n - 1, 2)
    x = sympy.cos(th)
    # degree-2 zonal polynomial and the polar-form Laplacian on S^n
    C2 = 2 * lam * (lam + 1) * x ** 2 - lam
    lap = sympy.diff(C2, th, 2) + (n - 1) * sympy.cos(th) / sympy.sin(th) * sympy.diff(C2, th)
    ratio = sympy.simplify(lap / C2 + 2 * (2 + n - 1))
    assert sympy.simplify(ratio) == 0


def test_pointwise_examples():
    disc = build_discretization(S5, Symmetry.ZONAL_ONLY, 24)
    p = (5 + 4) / (5 - 4)
    one = constant_field(disc, 1.0)
    assert np.max(np.abs(signed_power(one, p).nodal - 1.0)) <= 1e-12
    minus = constant_field(disc, -1.0)
    assert np.max(np.abs(signed_power(minus, p).nodal + 1.0)) <= 1e-12

    dp = build_discretization(PROD, Symmetry.CIRCLE_ONLY, 32)
    u = from_function(dp, lambda s: 2.0 + np.cos(s))
    sq = pointwise(u, np.square)
    expect = from_function(dp, lambda s: 4.5 + 4 * np.cos(s) + 0.5 * np.cos(2 * s))
    assert np.max(np.abs(sq.coeffs - expect.coeffs)) <= 1e-12


def test_pointwise_nonfinite_guard():
    disc = build_discretization(S5, Symmetry.ZONAL_ONLY, 24)
    u = constant_field(disc, -1.0)
    with pytest.raises(ValueError):
        pointwise(u, lambda v: v ** 0.5)


def test_parseval():
    rng = np.random.default_rng(3)
    for disc in (build_discretization(S5, Symmetry.ZONAL_ONLY, 24),
                 build_discretization(PROD, Symmetry.CIRCLE_ZONAL_2D, (12, 12))):
        f = random_band_limited(disc, rng)
        lhs = integrate(pointwise(f, np.square))
        rhs = float(np.sum(f.coeffs ** 2))
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_laplacian_symmetry():
    rng = np.random.default_rng(4)
    disc = build_discretization(PROD, Symmetry.CIRCLE_ZONAL_2D, (12, 12))
    for _ in range(100):
        f = random_band_limited(disc, rng)
        g = random_band_limited(disc, rng)
        a = integrate(from_nodal(disc, f.nodal * laplacian(g).nodal))
        b = integrate(from_nodal(disc, g.nodal * laplacian(f).nodal))
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


def test_product_of_band_limited_fields_projects_exactly():
    # half-band factors keep the product inside the stored band
    rng = np.random.default_rng(5)
    disc = build_discretization(S5, Symmetry.ZONAL_ONLY, 32)
    f = random_band_limited(disc, rng, half_band=True)
    g = random_band_limited(disc, rng, half_band=True)
    prod = from_nodal(disc, f.nodal * g.nodal)
    scale = np.max(np.abs(f.nodal * g.nodal)) + 1e-300
    assert np.max(np.abs(prod.nodal - f.nodal * g.nodal)) <= 1e-10 * scale


def test_derivative_nodal_circle_and_zonal():
    dp = build_discretization(PROD, Symmetry.CIRCLE_ONLY, 32)
    u = from_function(dp, lambda s: np.sin(2 * s))
    du = derivative_nodal(u, 0)
    s = dp.node_coordinates()[0]
    assert np.max(np.abs(du - 2 * np.cos(2 * s))) <= 1e-10

    dz = build_discretization(S5, Symmetry.ZONAL_ONLY, 32)
    u = from_function(dz, np.cos)       # cos(theta) is the degree-1 zonal mode
    du = derivative_nodal(u, 0)
    th = dz.node_coordinates()[0]
    assert np.max(np.abs(du + np.sin(th))) <= 1e-10


def test_incompatible_symmetry_and_mode_guards():
    with pytest.raises(ValueError):
        build_discretization(S5, Symmetry.CIRCLE_ONLY, 32)
    with pytest.raises(ValueError):
        build_discretization(PROD, Symmetry.ZONAL_ONLY, 32)
    with pytest.raises(ValueError):
        build_discretization(S5, Symmetry.ZONAL_ONLY, 4)
