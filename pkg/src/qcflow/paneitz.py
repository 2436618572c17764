"""Assembly, application, inversion, and spectral analysis of the
fourth-order conformally covariant operator

    P u = Lap^2 u + div{(4A - (n-2) sigma1 g)(grad u, .)} + (n-4)/2 Q u.

On the homogeneous models the divergence term reduces to constant
coefficients per tensor axis, so the operator is diagonal in the
orthonormal basis; it is nevertheless stored as a dense symmetric
matrix (below a size cap) so the same solve path serves conformally
transformed operators, which are dense in general.

Conformal operators are represented through the covariance law
    P_ghat(phi) = u^{-(n+4)/(n-4)} P_g(u phi),   ghat = u^{4/(n-4)} g,
with solves routed through the base factorization via
    P_ghat^{-1}(w) = u^{-1} P_g^{-1}(u^{(n+4)/(n-4)} w).
Integrals attached to a conformal operator use its own volume element
u^{2n/(n-4)} dv_g.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg

from .models import ModelKind, ModelManifold, curvature_data
from .spectral import (Discretization, Field, Symmetry, from_nodal,
                       integrate_nodal)

DENSE_CAP = 2100  # modes; above this only the diagonal solve path is kept


class OperatorNotPositiveError(RuntimeError):
    """Raised when a solve is requested on a non-positive operator."""

    def __init__(self, min_eig: float, spectrum_head: np.ndarray):
        self.min_eig = float(min_eig)
        self.spectrum_head = np.asarray(spectrum_head)
        super().__init__(
            f"operator is not positive (min eigenvalue {min_eig:.6g}); "
            f"smallest eigenvalues: {np.array2string(self.spectrum_head, precision=6)}")


def _axis_schouten(model: ModelManifold) -> list:
    """Exact Schouten eigenvalue attached to each tensor axis."""
    data = curvature_data(model)
    if model.kind is ModelKind.ROUND_SPHERE:
        return [Fraction(1, 2)]
    if model.kind is ModelKind.CIRCLE_CROSS_SPHERE:
        return [data.schouten_eigenvalues[0], data.schouten_eigenvalues[1]]
    return [Fraction(0)] * model.dim


@dataclass
class PaneitzOperator:
    """The discrete operator with cached factorization.

    background is 'model' for an assembled model-metric operator or
    'conformal' for one obtained through the covariance law.
    """

    disc: Discretization
    background: str
    symbol: np.ndarray | None = None          # per-mode eigenvalue (model case)
    matrix: np.ndarray | None = None          # dense form, when small enough
    base: "PaneitzOperator | None" = None     # conformal case
    u: Field | None = None
    min_eig: float = np.nan
    _cho: tuple | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.disc.model.dim

    @property
    def power(self) -> float:
        n = self.n
        return (n + 4.0) / (n - 4.0)

    @property
    def volume_density(self) -> np.ndarray:
        """Nodal density of the operator's own volume element against dv_g0."""
        if self.background == "model":
            return np.ones(self.disc.n_nodes)
        n = self.n
        return self.u.nodal ** (2.0 * n / (n - 4.0))

    def integrate(self, nodal_values: np.ndarray) -> float:
        """Integral against the operator's own volume element."""
        return integrate_nodal(self.disc, nodal_values * self.volume_density)

    @property
    def volume(self) -> float:
        return self.integrate(np.ones(self.disc.n_nodes))


def assemble(disc: Discretization, dense: bool | None = None) -> PaneitzOperator:
    """Assemble the model-metric operator on a discretization.

    The per-mode symbol is exact: with lam_i >= 0 the (positive)
    Laplacian eigenvalue carried by axis i and t_i = 4 A_i - (n-2) sigma1,

        P-mode = (sum_i lam_i)^2 - sum_i t_i lam_i + (n-4)/2 Q.
    """
    model = disc.model
    n = model.dim
    data = curvature_data(model)
    s1 = float(data.sigma1)
    cQ = (n - 4) / 2.0 * float(data.q_curv)
    axisA = [float(a) for a in _axis_schouten(model)]

    if disc.symmetry is Symmetry.FULL_TORUS_FOURIER:
        t = [0.0] * len(disc.axes)
    elif disc.symmetry is Symmetry.CIRCLE_ZONAL_2D:
        t = [4 * axisA[0] - (n - 2) * s1, 4 * axisA[1] - (n - 2) * s1]
    elif disc.symmetry is Symmetry.CIRCLE_ONLY:
        t = [4 * axisA[0] - (n - 2) * s1]
    else:  # zonal on the round sphere
        t = [4 * axisA[0] - (n - 2) * s1]

    shape = disc.mode_shape
    lam_tot = np.zeros(shape)
    tdot = np.zeros(shape)
    for i, ax in enumerate(disc.axes):
        sh = [1] * len(shape)
        sh[i] = ax.nmodes
        lam = (-ax.lap_eigs).reshape(sh)
        lam_tot = lam_tot + lam
        tdot = tdot + t[i] * lam
    symbol = (lam_tot ** 2 - tdot + cQ).ravel()

    op = PaneitzOperator(disc, "model", symbol=symbol, min_eig=float(symbol.min()))
    if dense is None:
        dense = disc.n_modes <= DENSE_CAP
    if dense:
        op.matrix = np.diag(symbol)
        if op.min_eig > 0:
            op._cho = scipy.linalg.cho_factor(op.matrix, lower=True)
    return op


def _mult_project(disc: Discretization, a_nodal: np.ndarray, f: Field) -> Field:
    return from_nodal(disc, a_nodal * f.nodal)


def apply_operator(P: PaneitzOperator, f: Field) -> Field:
    """Matrix-vector product in coefficients (covariance law if conformal)."""
    if f.disc is not P.disc:
        raise ValueError("field lives on a different discretization")
    if P.background == "model":
        if P.matrix is not None:
            return Field(P.disc, P.matrix @ f.flat)
        return Field(P.disc, P.symbol * f.flat)
    un = P.u.nodal
    g = apply_operator(P.base, _mult_project(P.disc, un, f))
    return from_nodal(P.disc, un ** (-P.power) * g.nodal)


def solve(P: PaneitzOperator, rhs: Field) -> Field:
    """The unique x with P x = rhs, through the cached factorization.

    Refuses on non-positive operators, reporting the low spectrum.
    """
    if rhs.disc is not P.disc:
        raise ValueError("field lives on a different discretization")
    if P.background == "conformal":
        un = P.u.nodal
        src = from_nodal(P.disc, un ** P.power * rhs.nodal)
        x = solve(P.base, src)
        return from_nodal(P.disc, x.nodal / un)
    if not P.min_eig > 0:
        head = np.sort(P.symbol)[:8] if P.symbol is not None else np.array([P.min_eig])
        raise OperatorNotPositiveError(P.min_eig, head)
    if P._cho is not None:
        x = scipy.linalg.cho_solve(P._cho, rhs.flat)
    else:
        x = rhs.flat / P.symbol
    resid = np.linalg.norm((P.matrix @ x if P.matrix is not None else P.symbol * x)
                           - rhs.flat)
    scale = np.linalg.norm(rhs.flat)
    if scale > 0 and resid > 1e-11 * scale:
        raise RuntimeError(f"solve residual {resid / scale:.3e} exceeds 1e-11")
    return Field(P.disc, x)


def min_eigenvalue(P: PaneitzOperator) -> float:
    """Smallest eigenvalue by dense symmetric eigensolve (diagonal read-off
    above the dense cap, where the matrix is exactly diagonal)."""
    if P.background == "model":
        if P.matrix is not None:
            return float(np.linalg.eigvalsh(P.matrix)[0])
        return float(P.symbol.min())
    # conformal: smallest generalized eigenvalue of the energy form against
    # the mass matrix of the conformal volume element
    B = _energy_matrix(P)
    M = _mass_matrix(P)
    return float(scipy.linalg.eigh(B, M, eigvals_only=True)[0])


def _basis_matrix(disc: Discretization) -> np.ndarray:
    V = disc.axes[0].values
    for ax in disc.axes[1:]:
        V = np.einsum("ip,jq->ijpq", V, ax.values).reshape(
            V.shape[0] * ax.values.shape[0], V.shape[1] * ax.values.shape[1])
    return V


def _energy_matrix(P: PaneitzOperator) -> np.ndarray:
    if P.background == "model":
        if P.matrix is not None:
            return P.matrix
        return np.diag(P.symbol)
    V = _basis_matrix(P.disc)
    w = P.disc.weights
    Tu = V.T @ (w[:, None] * (P.u.nodal[:, None] * V))
    return Tu.T @ _energy_matrix(P.base) @ Tu


def _mass_matrix(P: PaneitzOperator) -> np.ndarray:
    V = _basis_matrix(P.disc)
    w = P.disc.weights * P.volume_density
    return V.T @ (w[:, None] * V)


def conformal_operator(P_base: PaneitzOperator, u: Field) -> PaneitzOperator:
    """Operator of the metric u^{4/(n-4)} g via the covariance law."""
    if np.min(u.nodal) <= 0:
        raise ValueError("conformal factor must be positive at all nodes")
    op = PaneitzOperator(P_base.disc, "conformal", base=P_base, u=u)
    op.min_eig = P_base.min_eig  # positivity is conformally invariant
    return op


def w22_inner(P: PaneitzOperator, f: Field, g: Field) -> float:
    """Energy inner product integral(g . P f) against the operator's volume
    element; symmetric and positive definite for positive P."""
    if P.background == "model":
        if not P.min_eig > 0:
            raise OperatorNotPositiveError(P.min_eig, np.array([P.min_eig]))
        if P.matrix is not None:
            return float(f.flat @ (P.matrix @ g.flat))
        return float(f.flat @ (P.symbol * g.flat))
    # conformal: integral g (P_ghat f) dv_ghat = integral (u g) P_base (u f) dv_g
    un = P.u.nodal
    uf = _mult_project(P.disc, un, f)
    ug = _mult_project(P.disc, un, g)
    return w22_inner(P.base, uf, ug)
