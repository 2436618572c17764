"""Model manifolds with exactly-known curvature.

The engine runs on a finite family of closed homogeneous manifolds
(round sphere, flat torus, circle times round sphere) where every
curvature quantity entering the fourth-order operator is an exact
rational number.  This removes discretization error from all
curvature-dependent formulas, so positivity hypotheses can be checked
exactly rather than approximately.

Sign convention: the Laplacian is the trace of the Hessian, so on
Euclidean space it is the sum of pure second derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np


class ModelKind(Enum):
    ROUND_SPHERE = "sphere"
    FLAT_TORUS = "torus"
    CIRCLE_CROSS_SPHERE = "product"


@dataclass(frozen=True)
class ModelManifold:
    """A closed homogeneous model manifold.

    kind      -- which family member
    dim       -- dimension n >= 5
    sizes     -- free scale parameters: () for the unit sphere,
                 per-axis side lengths for the torus, (L,) for the
                 circle length of the product (sphere factors have
                 unit radius)
    """

    kind: ModelKind
    dim: int
    sizes: tuple = field(default=())

    def __post_init__(self):
        if self.dim < 5:
            raise ValueError(f"dim must be >= 5, got {self.dim}")
        if self.kind is ModelKind.ROUND_SPHERE:
            if self.sizes != ():
                raise ValueError("sphere radius is fixed to 1; no size parameters")
        elif self.kind is ModelKind.FLAT_TORUS:
            if len(self.sizes) != self.dim or any(s <= 0 for s in self.sizes):
                raise ValueError("torus needs one positive side length per axis")
        elif self.kind is ModelKind.CIRCLE_CROSS_SPHERE:
            if len(self.sizes) != 1 or self.sizes[0] <= 0:
                raise ValueError("product needs a positive circle length L")

    @property
    def circle_length(self) -> float:
        if self.kind is not ModelKind.CIRCLE_CROSS_SPHERE:
            raise AttributeError("circle_length only defined for the product model")
        return float(self.sizes[0])

    def describe(self) -> str:
        n = self.dim
        if self.kind is ModelKind.ROUND_SPHERE:
            return f"S^{n} (unit radius)"
        if self.kind is ModelKind.FLAT_TORUS:
            return f"T^{n} sides {tuple(float(s) for s in self.sizes)}"
        return f"S^1({float(self.sizes[0]):g}) x S^{n - 1} (unit sphere factor)"


def round_sphere(n: int) -> ModelManifold:
    return ModelManifold(ModelKind.ROUND_SPHERE, n)


def flat_torus(n: int, sides) -> ModelManifold:
    if np.isscalar(sides):
        sides = (float(sides),) * n
    return ModelManifold(ModelKind.FLAT_TORUS, n, tuple(float(s) for s in sides))


def circle_cross_sphere(n: int, length: float) -> ModelManifold:
    return ModelManifold(ModelKind.CIRCLE_CROSS_SPHERE, n, (float(length),))


@dataclass(frozen=True)
class CurvatureBundle:
    """Exact curvature data of a homogeneous model metric.

    All entries are rationals.  q_curv is Branson's fourth-order
    curvature; since the models are homogeneous its Laplacian term
    vanishes and q_curv = 4 sigma2 + (n-4)/2 sigma1^2 exactly.
    """

    schouten_eigenvalues: tuple
    sigma1: Fraction
    sigma2: Fraction
    scalar: Fraction
    q_curv: Fraction
    ricci_eigenvalues: tuple


def _bundle_from_ricci(n: int, ricci: Sequence[Fraction]) -> CurvatureBundle:
    R = sum(ricci)
    A = tuple((lam - R / (2 * (n - 1))) / (n - 2) for lam in ricci)
    s1 = sum(A)
    s2 = (s1 * s1 - sum(a * a for a in A)) / 2
    q = 4 * s2 + Fraction(n - 4, 2) * s1 * s1
    return CurvatureBundle(A, s1, s2, R, q, tuple(ricci))


def curvature_data(model: ModelManifold) -> CurvatureBundle:
    """Exact rational curvature quantities for the model metric."""
    n = model.dim
    if model.kind is ModelKind.ROUND_SPHERE:
        ricci = [Fraction(n - 1)] * n
    elif model.kind is ModelKind.FLAT_TORUS:
        ricci = [Fraction(0)] * n
    else:
        # circle direction is flat; each unit-sphere-factor direction
        # carries Ricci curvature (n-1)-1 = n-2
        ricci = [Fraction(0)] + [Fraction(n - 2)] * (n - 1)
    return _bundle_from_ricci(n, ricci)


def is_positivity_admissible(model: ModelManifold):
    """Check the semi-positivity hypotheses of the background metric.

    Returns (ok, explanation).  Admissible means the Q-curvature is
    semi-positive (>= 0 everywhere, > 0 somewhere) and the scalar
    curvature is nonnegative.  On homogeneous models both curvatures
    are constants, so the check is exact.
    """
    data = curvature_data(model)
    if data.q_curv < 0:
        return False, f"Q = {data.q_curv} < 0 violates semi-positivity"
    if data.q_curv == 0:
        return False, "Q ≡ 0 is not semi-positive"
    if data.scalar < 0:
        return False, f"R = {data.scalar} < 0"
    return True, f"Q = {data.q_curv} semi-positive, R = {data.scalar} >= 0"


def injectivity_scale(model: ModelManifold) -> float:
    """Largest radius at which geodesic polar coordinates are clean."""
    if model.kind is ModelKind.ROUND_SPHERE:
        return np.pi
    if model.kind is ModelKind.FLAT_TORUS:
        return min(model.sizes) / 2.0
    return min(model.circle_length / 2.0, np.pi)


def _circle_dist(a: float, b: float, L: float) -> float:
    d = abs(a - b) % L
    return min(d, L - d)


def geodesic_distance(model: ModelManifold, p, x) -> float:
    """Geodesic distance between two points.

    Point formats: sphere -- polar angle in [0, pi] (points on a common
    meridian); product -- (s, theta) pair; torus -- coordinate vector.
    """
    if model.kind is ModelKind.ROUND_SPHERE:
        a, b = float(p), float(x)
        for v in (a, b):
            if not 0.0 <= v <= np.pi + 1e-12:
                raise ValueError(f"sphere polar angle {v} outside [0, pi]")
        return abs(a - b)
    if model.kind is ModelKind.FLAT_TORUS:
        p = np.asarray(p, float)
        x = np.asarray(x, float)
        if p.shape != (model.dim,) or x.shape != (model.dim,):
            raise ValueError("torus points are coordinate vectors of length n")
        d = [_circle_dist(a, b, L) for a, b, L in zip(p, x, model.sizes)]
        return float(np.hypot.reduce(d))
    sp, tp = float(p[0]), float(p[1])
    sx, tx = float(x[0]), float(x[1])
    ds = _circle_dist(sp, sx, model.circle_length)
    return float(np.hypot(ds, abs(tp - tx)))
