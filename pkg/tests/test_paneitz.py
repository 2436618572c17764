import numpy as np
import pytest

from qcflow.models import circle_cross_sphere, flat_torus, round_sphere
from qcflow.paneitz import (OperatorNotPositiveError, apply_operator, assemble,
                            conformal_operator, min_eigenvalue, solve,
                            w22_inner)
from qcflow.spectral import (Field, Symmetry, build_discretization,
                             constant_field, from_function, from_nodal,
                             laplacian, random_band_limited)

S5 = round_sphere(5)
PROD = circle_cross_sphere(5, 2 * np.pi)


@pytest.fixture(scope="module")
def zonal():
    disc = build_discretization(S5, Symmetry.ZONAL_ONLY, 32)
    return disc, assemble(disc)


@pytest.fixture(scope="module")
def circle():
    disc = build_discretization(PROD, Symmetry.CIRCLE_ONLY, 32)
    return disc, assemble(disc)


def zonal_oracle(n, k):
    k = np.asarray(k, float)
    return (k + n / 2 - 2) * (k + n / 2 - 1) * (k + n / 2) * (k + n / 2 + 1)


def test_symbol_identity_symbolic():
    sympy = pytest.importorskip("sympy")
    k, n = sympy.symbols("k n")
    lam = k * (k + n - 1)
    symbol = lam ** 2 + (n * (n - 2) / 2 - 2) * lam + n * (n - 4) * (n ** 2 - 4) / 16
    oracle = (k + n / 2 - 2) * (k + n / 2 - 1) * (k + n / 2) * (k + n / 2 + 1)
    assert sympy.simplify(sympy.expand(symbol - oracle)) == 0


@pytest.mark.parametrize("n", [5, 6, 7, 8])
def test_sphere_zonal_spectrum(n):
    disc = build_discretization(round_sphere(n), Symmetry.ZONAL_ONLY, 32)
    P = assemble(disc)
    k = np.arange(32)
    assert np.max(np.abs(P.symbol / zonal_oracle(n, k) - 1)) <= 1e-10


def test_sphere_low_modes(zonal):
    _, P = zonal
    assert P.symbol[0] == pytest.approx(105 / 16, rel=1e-14)
    assert P.symbol[1] == pytest.approx(945 / 16, rel=1e-14)


def test_product_circle_spectrum(circle):
    disc, P = circle
    freq = disc.axes[0].freq
    oracle = (freq.astype(float) ** 2 + 0.25) * (freq.astype(float) ** 2 + 25 / 4)
    assert np.max(np.abs(P.symbol / oracle - 1)) <= 1e-10


def test_torus_operator_is_bilaplacian():
    disc = build_discretization(flat_torus(5, 2 * np.pi), Symmetry.FULL_TORUS_FOURIER, 8)
    P = assemble(disc)
    assert np.max(np.abs(P.symbol - disc.lap_eigs.ravel() ** 2)) == 0.0
    rng = np.random.default_rng(0)
    f = random_band_limited(disc, rng)
    lhs = apply_operator(P, f)
    rhs = laplacian(laplacian(f))
    assert np.max(np.abs(lhs.flat - rhs.flat)) <= 1e-10
    assert min_eigenvalue(P) == 0.0
    with pytest.raises(OperatorNotPositiveError):
        solve(P, constant_field(disc, 1.0))


def test_apply_constant(zonal):
    disc, P = zonal
    out = apply_operator(P, constant_field(disc, 1.0))
    assert np.max(np.abs(out.nodal - 105 / 16)) <= 1e-6


def test_apply_cosine(circle):
    disc, P = circle
    f = from_function(disc, np.cos)
    out = apply_operator(P, f)
    assert np.max(np.abs(out.nodal - 145 / 16 * f.nodal)) <= 1e-10


def test_solve_roundtrip_and_constant(zonal):
    disc, P = zonal
    rng = np.random.default_rng(1)
    f = random_band_limited(disc, rng)
    g = solve(P, apply_operator(P, f))
    assert np.max(np.abs(g.flat - f.flat)) <= 1e-10 * max(1, np.max(np.abs(f.flat)))
    c = solve(P, constant_field(disc, 3.0))
    assert np.max(np.abs(c.nodal - 3 * 16 / 105)) <= 1e-8


def test_inversion_positivity(circle):
    # discrete shadow of the strong maximum principle
    disc, P = circle
    rng = np.random.default_rng(2)
    for _ in range(20):
        q = random_band_limited(disc, rng, half_band=True)
        w = from_nodal(disc, q.nodal ** 2)     # nonnegative, not identically zero
        x = solve(P, w)
        assert np.min(x.nodal) > 0


def test_min_eigenvalue(zonal, circle):
    _, P = zonal
    assert min_eigenvalue(P) == pytest.approx(105 / 16, rel=1e-12)
    _, Pc = circle
    assert min_eigenvalue(Pc) == pytest.approx(25 / 16, rel=1e-12)


def test_dense_and_diagonal_paths_agree():
    disc = build_discretization(PROD, Symmetry.CIRCLE_ONLY, 24)
    Pd = assemble(disc, dense=True)
    Pg = assemble(disc, dense=False)
    assert np.max(np.abs(Pd.matrix - np.diag(Pd.symbol))) <= 1e-12 * np.max(Pd.symbol)
    rng = np.random.default_rng(3)
    f = random_band_limited(disc, rng)
    assert np.max(np.abs(solve(Pd, f).flat - solve(Pg, f).flat)) <= 1e-12


def test_matrix_symmetry(zonal):
    _, P = zonal
    M = P.matrix
    assert np.max(np.abs(M - M.T)) <= 1e-12 * np.max(np.abs(M))


def test_conformal_identity_factor(circle):
    disc, P = circle
    one = constant_field(disc, 1.0)
    Phat = conformal_operator(P, one)
    rng = np.random.default_rng(4)
    f = random_band_limited(disc, rng)
    assert np.max(np.abs(apply_operator(Phat, f).flat - apply_operator(P, f).flat)) <= 1e-9


def test_conformal_constant_homothety(circle):
    disc, P = circle
    c = 1.7
    Phat = conformal_operator(P, constant_field(disc, c))
    rng = np.random.default_rng(5)
    f = random_band_limited(disc, rng)
    n = 5
    scale = c ** (-8.0 / (n - 4))
    assert np.max(np.abs(apply_operator(Phat, f).flat
                         - scale * apply_operator(P, f).flat)) <= 1e-9


def test_conformal_q_from_operator(circle):
    disc, P = circle
    u = from_function(disc, lambda s: 1 + 0.2 * np.cos(s))
    Phat = conformal_operator(P, u)
    n = 5
    q1 = 2.0 / (n - 4) * apply_operator(Phat, constant_field(disc, 1.0)).nodal
    q2 = 2.0 / (n - 4) * u.nodal ** (-(n + 4.0) / (n - 4)) * apply_operator(P, u).nodal
    assert np.max(np.abs(q1 - q2)) <= 1e-8 * np.max(np.abs(q2))


def test_covariance_involution(circle):
    disc, P = circle
    u = from_function(disc, lambda s: 1 + 0.2 * np.cos(s))
    Phat = conformal_operator(P, u)
    Pback = conformal_operator(Phat, from_nodal(disc, 1.0 / u.nodal))
    rng = np.random.default_rng(6)
    for _ in range(5):
        f = random_band_limited(disc, rng)
        a = apply_operator(Pback, f).nodal
        b = apply_operator(P, f).nodal
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1, np.max(np.abs(b)))


def test_conformal_solve_law(circle):
    disc, P = circle
    u = from_function(disc, lambda s: 1 + 0.15 * np.sin(s))
    Phat = conformal_operator(P, u)
    rng = np.random.default_rng(7)
    f = random_band_limited(disc, rng, half_band=True)
    x = solve(Phat, apply_operator(Phat, f))
    assert np.max(np.abs(x.nodal - f.nodal)) <= 1e-8 * max(1, np.max(np.abs(f.nodal)))


def test_conformal_positive_guard(circle):
    disc, P = circle
    with pytest.raises(ValueError):
        conformal_operator(P, from_function(disc, np.cos))


def test_w22_inner(zonal):
    disc, P = zonal
    rng = np.random.default_rng(8)
    f = random_band_limited(disc, rng)
    assert w22_inner(P, f, f) > 0
    one = constant_field(disc, 1.0)
    assert w22_inner(P, one, one) == pytest.approx(105 / 16 * np.pi ** 3, rel=1e-10)
    for _ in range(10):
        a = random_band_limited(disc, rng)
        b = random_band_limited(disc, rng)
        assert w22_inner(P, a, b) == pytest.approx(w22_inner(P, b, a), rel=1e-11, abs=1e-13)


def test_disc_mismatch_guard(zonal, circle):
    _, P = zonal
    disc_c, _ = circle
    with pytest.raises(ValueError):
        apply_operator(P, constant_field(disc_c, 1.0))
