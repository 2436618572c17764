"""Conformal transformation laws and the quotient functionals.

For ghat = u^{4/(n-4)} g the fourth-order curvature transforms as
Q_ghat = (2/(n-4)) u^{-(n+4)/(n-4)} P_g u and the scalar curvature as
R_ghat = u^{-n/(n-4)} { -(4(n-1)/(n-4)) Lap u - (8(n-1)/(n-4)^2) |grad u|^2/u + R u }.

The quotient F(u) = (int u P u) / (int |u|^{2n/(n-4)})^{(n-4)/n} is scale
invariant and conformally invariant; mu is the same ratio without the
(n-4)/n power on the volume term.  All integrals are taken against the
operator's own volume element, which makes the conformal invariance an
identity of the implementation rather than a separate code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import curvature_data
from .paneitz import PaneitzOperator, apply_operator
from .spectral import Field, from_nodal, grad_norm_sq_nodal, laplacian

REL_POSITIVITY_TOL = 1e-9  # nodal v counts as nonnegative when v >= -tol*max|field|


def conformal_Q(P: PaneitzOperator, u: Field) -> Field:
    """Q-curvature of u^{4/(n-4)} g as a nodal field."""
    un = u.nodal
    if np.min(un) <= 0:
        raise ValueError("conformal factor must be positive at all nodes")
    n = P.n
    q = (2.0 / (n - 4)) * un ** (-P.power) * apply_operator(P, u).nodal
    return from_nodal(P.disc, q)


def conformal_R(u: Field) -> Field:
    """Scalar curvature of u^{4/(n-4)} g, gradients evaluated spectrally."""
    disc = u.disc
    n = disc.model.dim
    un = u.nodal
    if np.min(un) <= 0:
        raise ValueError("conformal factor must be positive at all nodes")
    R0 = float(curvature_data(disc.model).scalar)
    lap = laplacian(u).nodal
    grad2 = grad_norm_sq_nodal(u)
    core = (-(4.0 * (n - 1) / (n - 4)) * lap
            - (8.0 * (n - 1) / (n - 4) ** 2) * grad2 / un
            + R0 * un)
    return from_nodal(disc, un ** (-n / (n - 4.0)) * core)


@dataclass
class QuotientReport:
    numerator: float           # int u P u
    denominator_volume: float  # int |u|^{2n/(n-4)}
    quotient: float            # numerator / volume^{(n-4)/n}
    mu: float                  # numerator / volume


def quotient(P: PaneitzOperator, u: Field) -> QuotientReport:
    """Sobolev-type quotient report for a test function."""
    from .paneitz import w22_inner
    num = w22_inner(P, u, u)
    n = P.n
    vol = P.integrate(np.abs(u.nodal) ** (2.0 * n / (n - 4)))
    if vol <= 0:
        raise ValueError("zero field")
    return QuotientReport(num, vol, num / vol ** ((n - 4.0) / n), num / vol)


def total_Q(P: PaneitzOperator, u: Field) -> float:
    """Normalized total Q-curvature of u^{4/(n-4)} g; equals
    (2/(n-4)) times the quotient up to exact algebra."""
    if np.min(u.nodal) <= 0:
        raise ValueError("conformal factor must be positive at all nodes")
    rep = quotient(P, u)
    n = P.n
    return (2.0 / (n - 4)) * rep.numerator * rep.denominator_volume ** (-(n - 4.0) / n)


@dataclass
class PathRow:
    lam: float
    min_u: float
    min_q_bound: float   # min over nodes of (1-lam) Q0 u_lam^{-(n+4)/(n-4)}
    min_q: float         # min of the actual transformed Q (nan if u_lam <= 0)
    min_r: float         # min of the transformed scalar curvature (nan likewise)
    positive: bool


@dataclass
class PathReport:
    rows: list
    first_failure: float | None   # first lambda where a positivity check failed


def maxprinciple_path(P_base: PaneitzOperator, u: Field, steps: int = 21) -> PathReport:
    """Diagnostic sweep along u_lam = (1-lam) + lam u, lam in [0, 1].

    Requires P u >= 0 up to relative tolerance (the comparison-principle
    hypothesis).  Reports per-lambda minima of u_lam, of the transformed
    curvature lower bound, and of the transformed scalar curvature; it
    never aborts the caller once the hypothesis holds at lam = 0.
    """
    Pu = apply_operator(P_base, u).nodal
    scale = np.max(np.abs(Pu))
    if np.min(Pu) < -REL_POSITIVITY_TOL * scale:
        raise ValueError(
            f"hypothesis P u >= 0 violated at lambda = 0 "
            f"(min {np.min(Pu):.3e} vs scale {scale:.3e})")
    n = P_base.n
    Q0 = float(curvature_data(P_base.disc.model).q_curv)
    one = np.ones(P_base.disc.n_nodes)
    rows = []
    first_fail = None
    for lam in np.linspace(0.0, 1.0, steps):
        un = (1.0 - lam) * one + lam * u.nodal
        m = float(np.min(un))
        if m > 0:
            ul = from_nodal(P_base.disc, un)
            qb = float(np.min((1.0 - lam) * Q0 * un ** (-(n + 4.0) / (n - 4.0))))
            mq = float(np.min(conformal_Q(P_base, ul).nodal))
            mr = float(np.min(conformal_R(ul).nodal))
        else:
            qb = mq = mr = np.nan
        qscale = abs(Q0) if Q0 else 1.0
        ok = (m > 0 and mr > 0
              and mq >= -REL_POSITIVITY_TOL * qscale
              and qb >= -REL_POSITIVITY_TOL * qscale)
        if not ok and first_fail is None:
            first_fail = float(lam)
        rows.append(PathRow(float(lam), m, qb, mq, mr, ok))
    return PathReport(rows, first_fail)
