"""Symmetry-reduced spectral fields on model manifolds.

Fields are stored as coefficients in truncated orthonormal bases:
real Fourier modes on circle and torus axes, Gegenbauer-type zonal
harmonics on sphere axes (polynomials in cos(theta), orthogonal under
the polar density sin^{m-1}(theta) of an m-dimensional sphere factor).
Quadrature is Gauss type and the nodal grids carry twice the stored
mode count per axis, so products of two band-limited fields project
without aliasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.special import gammaln, roots_jacobi

from .models import ModelKind, ModelManifold


class Symmetry(Enum):
    CIRCLE_ONLY = "circle"
    ZONAL_ONLY = "zonal"
    CIRCLE_ZONAL_2D = "circle_zonal"
    FULL_TORUS_FOURIER = "torus"


def sphere_area(m: int) -> float:
    """Volume of the unit m-sphere, 2 pi^{(m+1)/2} / Gamma((m+1)/2)."""
    return float(2.0 * np.pi ** ((m + 1) / 2.0) / np.exp(gammaln((m + 1) / 2.0)))


# ---------------------------------------------------------------------------
# per-axis bases
# ---------------------------------------------------------------------------

def gegenbauer_values(nmodes: int, lam: float, x) -> np.ndarray:
    """C_l^lam(x) for l < nmodes via the three-term recurrence, shape (nmodes, len(x))."""
    x = np.atleast_1d(np.asarray(x, float))
    C = np.zeros((nmodes, x.size))
    C[0] = 1.0
    if nmodes > 1:
        C[1] = 2.0 * lam * x
    for l in range(1, nmodes - 1):
        C[l + 1] = (2.0 * (l + lam) * x * C[l] - (l + 2.0 * lam - 1.0) * C[l - 1]) / (l + 1.0)
    return C


def _gegenbauer_norm_sq(l, lam: float) -> np.ndarray:
    # int_{-1}^{1} C_l^lam(x)^2 (1-x^2)^{lam-1/2} dx
    l = np.asarray(l, float)
    return np.exp(np.log(np.pi) + (1.0 - 2.0 * lam) * np.log(2.0)
                  + gammaln(l + 2.0 * lam) - gammaln(l + 1.0)
                  - np.log(l + lam) - 2.0 * gammaln(lam))


class ZonalAxis:
    """Zonal harmonics on a unit m-sphere factor, orthonormal under the full factor measure."""

    def __init__(self, m: int, nmodes: int):
        self.m = m
        self.nmodes = nmodes
        self.lam = (m - 1) / 2.0
        M = 2 * nmodes
        a = (m - 2) / 2.0
        x, w = roots_jacobi(M, a, a)
        order = np.argsort(-x)                      # increasing theta
        self.theta = np.arccos(x[order])
        self.coords = self.theta
        self.area_factor = sphere_area(m - 1)
        self.weights = w[order] * self.area_factor
        self._norm = np.sqrt(_gegenbauer_norm_sq(np.arange(nmodes), self.lam)
                             * self.area_factor)
        self.values = self.eval(self.theta)
        self.lap_eigs = -np.arange(nmodes) * (np.arange(nmodes) + m - 1.0)
        self.grid_length = float(np.max(np.diff(np.concatenate(([0.0], self.theta, [np.pi])))))

    def eval(self, theta, deriv: int = 0) -> np.ndarray:
        """Basis values (deriv=0) or d/dtheta values at polar angles, shape (npts, nmodes)."""
        theta = np.atleast_1d(np.asarray(theta, float))
        x = np.cos(theta)
        if deriv == 0:
            return (gegenbauer_values(self.nmodes, self.lam, x) / self._norm[:, None]).T
        # d/dx C_l^lam = 2 lam C_{l-1}^{lam+1};  d/dtheta = -sin(theta) d/dx
        out = np.zeros((theta.size, self.nmodes))
        if self.nmodes > 1:
            Cd = gegenbauer_values(self.nmodes - 1, self.lam + 1.0, x)
            out[:, 1:] = (2.0 * self.lam * Cd).T
        return -np.sin(theta)[:, None] * out / self._norm[None, :]


class CircleAxis:
    """Real Fourier modes on a circle of length L: constant, cos/sin pairs,
    and (for even mode counts) the Nyquist cosine, giving exactly nmodes
    real degrees of freedom."""

    def __init__(self, L: float, nmodes: int, measure_scale: float = 1.0):
        self.L = float(L)
        self.nmodes = nmodes
        M = 2 * nmodes
        self.s = np.arange(M) * (self.L / M)
        self.coords = self.s
        self.weights = np.full(M, self.L / M * measure_scale)
        self._total = self.L * measure_scale
        freq = np.zeros(nmodes, int)
        is_sin = np.zeros(nmodes, bool)
        j, k = 1, 1
        while j < nmodes:
            freq[j] = k
            if j + 1 < nmodes:
                freq[j + 1] = k
                is_sin[j + 1] = True
            j += 2
            k += 1
        self.freq = freq
        self.is_sin = is_sin
        self.omega = 2.0 * np.pi * freq / self.L
        self.lap_eigs = -self.omega ** 2
        self.values = self.eval(self.s)
        self.grid_length = self.L / M

    def eval(self, s, deriv: int = 0) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, float))
        out = np.zeros((s.size, self.nmodes))
        amp = np.sqrt(2.0 / self._total)
        arg = np.outer(s, self.omega)
        cos, sin = np.cos(arg), np.sin(arg)
        if deriv == 0:
            out[:, 0] = 1.0 / np.sqrt(self._total)
            out[:, 1:] = amp * np.where(self.is_sin[1:], sin[:, 1:], cos[:, 1:])
        else:
            out[:, 1:] = amp * self.omega[1:] * np.where(self.is_sin[1:], cos[:, 1:], -sin[:, 1:])
        return out


def _apply_axis_matrices(mats, tensor: np.ndarray) -> np.ndarray:
    """Contract matrix mats[i] (out_i x in_i) against tensor axis i, for all axes."""
    out = tensor
    for i, M in enumerate(mats):
        out = np.moveaxis(np.tensordot(M, out, axes=(1, i)), 0, i)
    return out


# ---------------------------------------------------------------------------
# discretizations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Discretization:
    """Immutable spectral discretization of a symmetry class on a model."""

    model: ModelManifold
    symmetry: Symmetry
    axes: tuple

    @property
    def mode_shape(self) -> tuple:
        return tuple(ax.nmodes for ax in self.axes)

    @property
    def nodal_shape(self) -> tuple:
        return tuple(ax.weights.size for ax in self.axes)

    @property
    def n_modes(self) -> int:
        return int(np.prod(self.mode_shape))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.nodal_shape))

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights over the flattened nodal grid (full model measure)."""
        w = self.axes[0].weights
        for ax in self.axes[1:]:
            w = np.multiply.outer(w, ax.weights)
        return np.asarray(w).ravel()

    @property
    def grid_length(self) -> float:
        return max(ax.grid_length for ax in self.axes)

    @property
    def lap_eigs(self) -> np.ndarray:
        """Laplace-Beltrami eigenvalue per mode, shaped like mode_shape."""
        out = np.zeros(self.mode_shape)
        for i, ax in enumerate(self.axes):
            shape = [1] * len(self.axes)
            shape[i] = ax.nmodes
            out = out + ax.lap_eigs.reshape(shape)
        return out

    def to_nodal(self, coeffs: np.ndarray) -> np.ndarray:
        c = np.asarray(coeffs).reshape(self.mode_shape)
        return _apply_axis_matrices([ax.values for ax in self.axes], c).ravel()

    def to_coeffs(self, nodal: np.ndarray) -> np.ndarray:
        u = np.asarray(nodal, float).reshape(self.nodal_shape)
        mats = [(ax.values * ax.weights[:, None]).T for ax in self.axes]
        return _apply_axis_matrices(mats, u)

    def node_coordinates(self) -> tuple:
        return tuple(ax.coords for ax in self.axes)


def build_discretization(model: ModelManifold, symmetry: Symmetry, mode_count) -> Discretization:
    """Construct the spectral discretization for a symmetry class.

    mode_count is the number of stored modes per axis (a pair may be
    given for the 2D product class); nodal grids carry 2x the modes.
    """
    counts = np.atleast_1d(np.asarray(mode_count, int))
    if np.any(counts < 8):
        raise ValueError("mode_count must be >= 8")
    n = model.dim

    if symmetry is Symmetry.ZONAL_ONLY:
        if model.kind is not ModelKind.ROUND_SPHERE:
            raise ValueError("ZonalOnly requires the round sphere")
        return Discretization(model, symmetry, (ZonalAxis(n, int(counts[0])),))

    if symmetry is Symmetry.CIRCLE_ONLY:
        if model.kind is not ModelKind.CIRCLE_CROSS_SPHERE:
            raise ValueError("CircleOnly requires the circle-cross-sphere product")
        ax = CircleAxis(model.circle_length, int(counts[0]), measure_scale=sphere_area(n - 1))
        return Discretization(model, symmetry, (ax,))

    if symmetry is Symmetry.CIRCLE_ZONAL_2D:
        if model.kind is not ModelKind.CIRCLE_CROSS_SPHERE:
            raise ValueError("CircleZonal2D requires the circle-cross-sphere product")
        if counts.size == 1:
            counts = np.array([counts[0], counts[0]])
        return Discretization(model, symmetry,
                              (CircleAxis(model.circle_length, int(counts[0])),
                               ZonalAxis(n - 1, int(counts[1]))))

    if symmetry is Symmetry.FULL_TORUS_FOURIER:
        if model.kind is not ModelKind.FLAT_TORUS:
            raise ValueError("FullTorusFourier requires the flat torus")
        N = int(counts[0])
        return Discretization(model, symmetry,
                              tuple(CircleAxis(L, N) for L in model.sizes))

    raise ValueError(f"unknown symmetry {symmetry}")


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

class Field:
    """A scalar field: basis coefficients plus lazily cached nodal values."""

    __slots__ = ("disc", "coeffs", "_nodal")

    def __init__(self, disc: Discretization, coeffs, nodal=None):
        self.disc = disc
        self.coeffs = np.asarray(coeffs, float).reshape(disc.mode_shape)
        self._nodal = nodal
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("non-finite coefficients")

    @property
    def nodal(self) -> np.ndarray:
        if self._nodal is None:
            self._nodal = self.disc.to_nodal(self.coeffs)
        return self._nodal

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.ravel()

    def copy(self) -> "Field":
        return Field(self.disc, self.coeffs.copy())

    def __add__(self, other):
        return Field(self.disc, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return Field(self.disc, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return Field(self.disc, self.coeffs * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.disc, -self.coeffs)


def constant_field(disc: Discretization, value: float) -> Field:
    return from_nodal(disc, np.full(disc.n_nodes, float(value)))


def from_nodal(disc: Discretization, nodal) -> Field:
    return Field(disc, disc.to_coeffs(nodal))


def from_function(disc: Discretization, fn: Callable) -> Field:
    """Project a function of the node coordinates onto the basis."""
    grids = np.meshgrid(*disc.node_coordinates(), indexing="ij")
    return from_nodal(disc, np.asarray(fn(*grids), float).ravel())


def integrate(f: Field) -> float:
    """Quadrature value of the integral of f over the model."""
    return float(np.dot(f.disc.weights, f.nodal))


def integrate_nodal(disc: Discretization, values: np.ndarray) -> float:
    return float(np.dot(disc.weights, values))


def laplacian(f: Field) -> Field:
    return Field(f.disc, f.disc.lap_eigs * f.coeffs)


def pointwise(f: Field, fn: Callable[[np.ndarray], np.ndarray]) -> Field:
    """Apply a scalar map at nodes and re-expand in the basis."""
    vals = np.asarray(fn(f.nodal), float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("pointwise map produced non-finite values")
    return from_nodal(f.disc, vals)


def signed_power(f: Field, p: float) -> Field:
    """sign(u) |u|^p applied at nodes; well defined for any sign of u."""
    return pointwise(f, lambda v: signed_power_nodal(v, p))


def signed_power_nodal(values: np.ndarray, p: float) -> np.ndarray:
    return np.sign(values) * np.abs(values) ** p


def derivative_nodal(f: Field, axis: int = 0) -> np.ndarray:
    """Nodal values of the arclength derivative along one tensor axis."""
    disc = f.disc
    mats = [ax.values for ax in disc.axes]
    target = disc.axes[axis]
    mats[axis] = target.eval(target.coords, deriv=1)
    return _apply_axis_matrices(mats, f.coeffs).ravel()


def grad_norm_sq_nodal(f: Field) -> np.ndarray:
    """|grad f|^2 at nodes, summing arclength derivatives per axis."""
    out = np.zeros(f.disc.n_nodes)
    for ax in range(len(f.disc.axes)):
        out += derivative_nodal(f, ax) ** 2
    return out


def random_band_limited(disc: Discretization, rng: np.random.Generator,
                        decay: float = 2.0, half_band: bool = False) -> Field:
    """Random smooth field with algebraically decaying coefficients."""
    lam = np.abs(disc.lap_eigs.ravel())
    amp = (1.0 + lam) ** (-decay / 2.0)
    c = rng.standard_normal(disc.n_modes) * amp
    if half_band:
        c[lam > np.quantile(lam, 0.25)] = 0.0
    return Field(disc, c)
