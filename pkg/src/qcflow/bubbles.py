"""Concentrating test functions and Sobolev-quotient deficits.

Three variants are built around a center point:

  standard   u_eps  = eta(r) (eps^2 + r^2)^{-(n-4)/2}, smooth cutoff eta;
  corrected  uhat   = P^{-1}( eta b_n eps^4 (eps^2 + r^2)^{-(n+4)/2} ),
             with b_n = n(n-4)(n^2-4) the flat radial bilaplacian
             constant of the profile; positive by the inversion
             positivity of P;
  glued      ucheck = chi(r)(u_eps + beta) + (1 - chi) G / leading,
             splicing the bubble to the rescaled Green's function at an
             inner radius delta_tilde, with beta = alpha / leading taken
             from the fitted pole expansion.

Quotients of sharply concentrated fields are evaluated by graded-panel
Gauss quadrature of the energy density, with closed-form derivatives
for the bubble and cutoff factors and the exact image-sum kernel for
the far field; band-limited projections would otherwise dominate the
deficit at small eps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.polynomial.legendre import leggauss

from .models import ModelKind, curvature_data, injectivity_scale
from .paneitz import PaneitzOperator, _axis_schouten, solve
from .spectral import (Discretization, Field, Symmetry, from_nodal,
                       sphere_area)
from .green import (GreenExpansion, ProductImageKernel, node_distances)


class BubbleVariant(Enum):
    STANDARD = "standard"
    CORRECTED = "corrected"
    GLUED = "glued"


def bubble_constant(n: int) -> int:
    """Flat-space radial identity constant: Lap0^2 (eps^2+r^2)^{-(n-4)/2}
    = b_n eps^4 (eps^2+r^2)^{-(n+4)/2}."""
    return n * (n - 4) * (n ** 2 - 4)


# ---------------------------------------------------------------------------
# smooth cutoffs (exp-profile bump) with first and second derivatives
# ---------------------------------------------------------------------------

def smooth_fall(t):
    """C-infinity profile: 1 for t <= 0, 0 for t >= 1; returns (f, f', f'')."""
    t = np.asarray(t, float)
    f = np.zeros_like(t)
    fp = np.zeros_like(t)
    fpp = np.zeros_like(t)
    f[t <= 0.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    u = np.exp(-1.0 / (1.0 - tm))
    v = np.exp(-1.0 / tm)
    up = -u / (1.0 - tm) ** 2
    vp = v / tm ** 2
    upp = u / (1.0 - tm) ** 4 - 2.0 * u / (1.0 - tm) ** 3
    vpp = v / tm ** 4 - 2.0 * v / tm ** 3
    tot = u + v
    f[mid] = u / tot
    fp[mid] = (up * v - u * vp) / tot ** 2
    fpp[mid] = ((upp * v - u * vpp) * tot - 2.0 * (up * v - u * vp) * (up + vp)) / tot ** 3
    return f, fp, fpp


def cutoff(r, radius):
    """eta(r): 1 on r <= radius, 0 on r >= 2 radius; (f, f', f'') in r."""
    f, fp, fpp = smooth_fall((np.asarray(r, float) - radius) / radius)
    return f, fp / radius, fpp / radius ** 2


def cutoff_derivative_scales(radius: float, nsamp: int = 4001):
    """Max of |d^k eta/dr^k| for k = 1..4 (k = 3, 4 by differencing the
    analytic second derivative); they scale as radius^{-k}."""
    r = np.linspace(radius * (1 + 1e-6), 2 * radius * (1 - 1e-6), nsamp)
    _, d1, d2 = cutoff(r, radius)
    h = r[1] - r[0]
    d3 = np.gradient(d2, h)
    d4 = np.gradient(d3, h)
    return {1: float(np.max(np.abs(d1))), 2: float(np.max(np.abs(d2))),
            3: float(np.max(np.abs(d3))), 4: float(np.max(np.abs(d4)))}


# ---------------------------------------------------------------------------
# bubble specs and field constructors
# ---------------------------------------------------------------------------

@dataclass
class BubbleSpec:
    eps: float
    center: tuple
    delta: float                  # outer cutoff radius (support ends at 2 delta)
    variant: BubbleVariant = BubbleVariant.STANDARD
    delta_tilde: float = 0.0      # gluing radius (glued variant)
    beta: float = 0.0             # alpha / leading from the fitted expansion

    def validate(self, model, strict: bool = False):
        scale = injectivity_scale(model)
        msgs = []
        if self.eps > self.delta / 10.0:
            msgs.append(f"eps = {self.eps} exceeds delta/10 = {self.delta / 10:.4g}")
        if self.delta > scale / 4.0:
            msgs.append(f"delta = {self.delta} exceeds scale/4 = {scale / 4:.4g}")
        if self.variant is BubbleVariant.GLUED and not 0 < self.delta_tilde:
            msgs.append("glued variant needs delta_tilde > 0")
        for m in msgs:
            if strict:
                raise ValueError(m)
            warnings.warn(m + " (outside the sharp concentration regime)",
                          stacklevel=2)


def _profile(r, eps, n):
    a = (n - 4) / 2.0
    return (eps ** 2 + r ** 2) ** (-a)


def standard_bubble(disc: Discretization, spec: BubbleSpec, strict: bool = False) -> Field:
    """eta(r) (eps^2 + r^2)^{-(n-4)/2} centered on the symmetry axis."""
    spec.validate(disc.model, strict)
    r = node_distances(disc, spec.center)
    eta, _, _ = cutoff(r, spec.delta)
    return from_nodal(disc, eta * _profile(r, spec.eps, disc.model.dim))


def corrected_source(disc: Discretization, spec: BubbleSpec) -> Field:
    n = disc.model.dim
    r = node_distances(disc, spec.center)
    eta, _, _ = cutoff(r, spec.delta)
    return from_nodal(disc, eta * bubble_constant(n) * spec.eps ** 4
                      * (spec.eps ** 2 + r ** 2) ** (-(n + 4) / 2.0))


def corrected_bubble(P: PaneitzOperator, spec: BubbleSpec, strict: bool = False) -> Field:
    """Solve P uhat = eta b_n eps^4 (eps^2+r^2)^{-(n+4)/2}; positive by the
    inversion positivity of P on admissible backgrounds."""
    spec.validate(P.disc.model, strict)
    return solve(P, corrected_source(P.disc, spec))


def glued_bubble(P: PaneitzOperator, spec: BubbleSpec, expansion: GreenExpansion,
                 G: Field, strict: bool = False) -> Field:
    """chi (u_eps + beta) + (1 - chi) G / leading as a nodal composition."""
    spec.validate(P.disc.model, strict)
    beta = spec.beta if spec.beta else expansion.alpha / expansion.leading_coeff
    if beta <= 0 and P.disc.model.kind is not ModelKind.ROUND_SPHERE:
        warnings.warn(f"beta = {beta:.3e} <= 0 where the mass theorem predicts "
                      "a positive constant", stacklevel=2)
    r = node_distances(P.disc, spec.center)
    chi, _, _ = cutoff(r, spec.delta_tilde)
    n = P.disc.model.dim
    vals = chi * (_profile(r, spec.eps, n) + beta) \
        + (1.0 - chi) * G.nodal / expansion.leading_coeff
    return from_nodal(P.disc, vals)


def sphere_extremal_field(disc: Discretization, eps: float) -> Field:
    """Stereographic pushforward of the flat extremal profile to the round
    sphere: (2 sin^2(t/2) + 2 eps^2 cos^2(t/2))^{-(n-4)/2}, whose quotient
    equals the flat sharp constant identically in eps."""
    if disc.symmetry is not Symmetry.ZONAL_ONLY:
        raise ValueError("sphere extremal field needs a zonal discretization")
    n = disc.model.dim
    th = disc.axes[0].theta
    vals = (2.0 * np.sin(th / 2) ** 2 + 2.0 * eps ** 2 * np.cos(th / 2) ** 2) ** (-(n - 4) / 2.0)
    return from_nodal(disc, vals)


# ---------------------------------------------------------------------------
# the flat sharp constant
# ---------------------------------------------------------------------------

def euclidean_Sn(n: int, quad_points: int = 240) -> float:
    """Sharp flat quotient int (Lap0 U)^2 / (int U^{2n/(n-4)})^{(n-4)/n} at
    the extremal profile U = (1 + r^2)^{-(n-4)/2}, by radial Gauss
    quadrature on the compactified variable r = tan(phi)."""
    if n < 5:
        raise ValueError("need n >= 5")
    x, w = leggauss(quad_points)
    phi = (x + 1.0) * (np.pi / 4.0)
    wphi = w * (np.pi / 4.0)
    r = np.tan(phi)
    jac = 1.0 / np.cos(phi) ** 2
    a = (n - 4) / 2.0
    U = (1.0 + r ** 2) ** (-a)
    Up = -2.0 * a * r * (1.0 + r ** 2) ** (-a - 1)
    Upp = -2.0 * a * (1.0 + r ** 2) ** (-a - 1) + 4.0 * a * (a + 1) * r ** 2 * (1.0 + r ** 2) ** (-a - 2)
    lap = Upp + (n - 1) / r * Up
    om = sphere_area(n - 1)
    num = om * np.sum(wphi * jac * lap ** 2 * r ** (n - 1.0))
    den = om * np.sum(wphi * jac * U ** (2.0 * n / (n - 4)) * r ** (n - 1.0))
    return float(num / den ** ((n - 4.0) / n))


# ---------------------------------------------------------------------------
# graded-panel quadrature of glued-bubble quotients on the product
# ---------------------------------------------------------------------------

def _axis_breaks(eps, dtil, hi):
    b = {0.0, float(hi)}
    x = eps / 4.0
    while x < hi:
        b.add(x)
        x *= 1.6
    for v in (dtil, 1.5 * dtil, 2.0 * dtil, 3.0 * dtil):
        if v < hi:
            b.add(v)
    k = 1
    while 0.5 * k < hi:
        b.add(0.5 * k)
        k += 1
    return np.array(sorted(b))


def _panel_points(breaks, q):
    xg, wg = leggauss(q)
    pts, wts = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        pts.append((a + b) / 2.0 + (b - a) / 2.0 * xg)
        wts.append((b - a) / 2.0 * wg)
    return np.concatenate(pts), np.concatenate(wts)


def glued_quotient_product(model, eps: float, dtil: float, beta: float,
                           leading: float, q: int = 12, kernel=None):
    """Quotient of the glued bubble on S^1(L) x S^{n-1}, centered at
    (0, 0), by 2D graded-panel quadrature of the energy density

        (Lap u)^2 - t_s (d_s u)^2 - t_z (d_th u)^2 + (n-4)/2 Q u^2

    with analytic bubble/cutoff derivatives and the exact image-sum
    kernel for the Green's-function far field (normalized by the fitted
    leading coefficient)."""
    n = model.dim
    L = model.circle_length
    a = (n - 4) / 2.0
    data = curvature_data(model)
    s1 = float(data.sigma1)
    A = [float(v) for v in _axis_schouten(model)]
    t_s = 4.0 * A[0] - (n - 2) * s1
    t_z = 4.0 * A[1] - (n - 2) * s1
    cQ = (n - 4) / 2.0 * float(data.q_curv)
    sig = sphere_area(n - 2)
    if kernel is None:
        kernel = ProductImageKernel(n, L)

    br_s = _axis_breaks(eps, dtil, L / 2.0)
    br_t = _axis_breaks(eps, dtil, np.pi)
    sp, sw = _panel_points(br_s, q)
    tp, tw = _panel_points(br_t, q)
    S = np.repeat(sp, tp.size)
    T = np.tile(tp, sp.size)
    W = (np.repeat(sw, tp.size) * np.tile(tw, sp.size)) * 2.0 * sig * np.sin(T) ** (n - 2)

    r = np.hypot(S, T)
    rinv = 1.0 / r
    rs, rt = S * rinv, T * rinv
    ue = (eps ** 2 + r ** 2) ** (-a)
    uep = -2.0 * a * r * (eps ** 2 + r ** 2) ** (-a - 1)
    uepp = (-2.0 * a * (eps ** 2 + r ** 2) ** (-a - 1)
            + 4.0 * a * (a + 1) * r ** 2 * (eps ** 2 + r ** 2) ** (-a - 2))
    chi, chp, chpp = cutoff(r, dtil)
    gb, gbs, gbt, gbl = kernel.all_derivs(S, T)
    gb, gbs, gbt, gbl = gb / leading, gbs / leading, gbt / leading, gbl / leading

    ct, st = np.cos(T), np.sin(T)
    cot = ct / st
    D = ue + beta - gb
    Ds = uep * rs - gbs
    Dt = uep * rt - gbt
    lap_ue = uepp + uep * rinv + (n - 2) * cot * uep * rt
    lap_chi = chpp + chp * rinv + (n - 2) * cot * chp * rt
    val = gb + chi * D
    vs = gbs + chp * rs * D + chi * Ds
    vt = gbt + chp * rt * D + chi * Dt
    vlap = gbl + chi * (lap_ue - gbl) + 2.0 * chp * (rs * Ds + rt * Dt) + D * lap_chi

    num = float(np.sum(W * (vlap ** 2 - t_s * vs ** 2 - t_z * vt ** 2 + cQ * val ** 2)))
    den = float(np.sum(W * np.abs(val) ** (2.0 * n / (n - 4))))
    return num / den ** ((n - 4.0) / n)


def default_gluing_radius(eps: float) -> float:
    """Gluing radius schedule keeping the bubble core well inside the
    gluing ball while the annulus stays in the kernel's smooth zone."""
    return float(np.clip(3.5 * eps, 0.12, 0.7))


# ---------------------------------------------------------------------------
# deficit scans
# ---------------------------------------------------------------------------

@dataclass
class DeficitRow:
    eps: float
    quotient: float
    deficit: float


@dataclass
class DeficitReport:
    variant: BubbleVariant
    rows: list
    fit_exponent: float
    sharp_constant: float


def _fit_exponent(rows):
    pos = [(row.eps, row.deficit) for row in rows if row.deficit > 0]
    if len(pos) < 2:
        return float("nan")
    le = np.log([p[0] for p in pos])
    ld = np.log([p[1] for p in pos])
    A = np.stack([le, np.ones_like(le)], axis=1)
    return float(np.linalg.lstsq(A, ld, rcond=None)[0][0])


def deficit_scan_product_glued(model, eps_list, expansion: GreenExpansion,
                               q: int = 12) -> DeficitReport:
    """Glued-bubble deficits S_n - F on the product, one row per eps."""
    n = model.dim
    Sn = euclidean_Sn(n)
    beta = expansion.alpha / expansion.leading_coeff
    kernel = ProductImageKernel(n, model.circle_length)
    rows = []
    for eps in eps_list:
        F = glued_quotient_product(model, eps, default_gluing_radius(eps),
                                   beta, expansion.leading_coeff, q, kernel)
        rows.append(DeficitRow(float(eps), F, Sn - F))
    return DeficitReport(BubbleVariant.GLUED, rows, _fit_exponent(rows), Sn)


def deficit_scan_sphere_standard(disc: Discretization, eps_list) -> DeficitReport:
    """Quotients of the pushed extremal profile on the round sphere; the
    deficits vanish in the limit (the sphere attains the flat constant)."""
    from .conformal import quotient as _quotient
    from .paneitz import assemble
    n = disc.model.dim
    Sn = euclidean_Sn(n)
    P = assemble(disc)
    rows = []
    for eps in eps_list:
        F = _quotient(P, sphere_extremal_field(disc, eps)).quotient
        rows.append(DeficitRow(float(eps), F, Sn - F))
    return DeficitReport(BubbleVariant.STANDARD, rows, _fit_exponent(rows), Sn)
