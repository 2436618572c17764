"""Adaptive embedded Runge-Kutta stepping (Dormand-Prince 5(4)).

Seven stages, FSAL, fifth-order propagation with embedded fourth-order
error estimate and the standard quartic dense-output interpolant.  The
controller accepts a step only when the estimated local error is at or
below tol * ||y||, which is the contract the flow module relies on.

References: Dormand & Prince (1980); Hairer, Norsett & Wanner,
"Solving Ordinary Differential Equations I".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# B - Bhat: weights of the embedded fourth-order error estimate
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense-output polynomial (Shampine), columns are powers x^1..x^4 of the
# normalized step fraction
P_DENSE = np.array([
    [1.0, -2.8535800653862835, 3.0717434641059005, -1.1270175653862835],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 4.023133379230305, -6.249321565289, 2.675424484351598],
    [0.0, -3.7324019615885042, 10.068970589843675, -5.685526961588504],
    [0.0, 2.5548038301849423, -6.399112377351017, 3.5219323679207912],
    [0.0, -1.3744241142186024, 3.272657752246729, -1.7672812570757455],
    [0.0, 1.3824689317781436, -3.764937863556287, 2.382468931778144],
])

MIN_STEP = 1e-12
SAFETY = 0.9
ORDER = 5


@dataclass
class DenseSegment:
    """Continuous extension of one accepted step over [t0, t0+h]."""

    t0: float
    h: float
    y0: np.ndarray
    Q: np.ndarray   # (dim, 4) interpolant coefficients

    @property
    def t1(self) -> float:
        return self.t0 + self.h

    def __call__(self, t: float) -> np.ndarray:
        x = (t - self.t0) / self.h
        powers = np.array([x, x ** 2, x ** 3, x ** 4])
        return self.y0 + self.h * (self.Q @ powers)


class StepSizeUnderflow(RuntimeError):
    pass


class DormandPrince45:
    """One-step adaptive integrator; the owner drives it step by step."""

    def __init__(self, fun: Callable[[float, np.ndarray], np.ndarray],
                 t0: float, y0: np.ndarray, tol: float, first_step: float = 1e-3,
                 max_step: float = np.inf):
        self.fun = fun
        self.t = float(t0)
        self.y = np.asarray(y0, float).copy()
        self.tol = float(tol)
        self.h = float(first_step)
        self.max_step = float(max_step)
        self.f0 = fun(self.t, self.y)   # FSAL slot
        self.n_accepted = 0
        self.n_rejected = 0

    def step(self, h_cap: float = np.inf) -> DenseSegment:
        """Advance by one accepted step (retrying with smaller h as needed)."""
        while True:
            h = min(self.h, self.max_step, h_cap)
            if h < MIN_STEP:
                raise StepSizeUnderflow(f"step size underflow at t = {self.t:.6g}")
            K = np.empty((7, self.y.size))
            K[0] = self.f0
            for i in range(1, 6):
                yi = self.y + h * (A[i] @ K[:i])
                K[i] = self.fun(self.t + C[i] * h, yi)
            y_new = self.y + h * (A[6] @ K[:6])
            K[6] = self.fun(self.t + h, y_new)
            err = h * (E @ K)
            scale = max(np.linalg.norm(self.y), np.linalg.norm(y_new), 1e-300)
            enorm = np.linalg.norm(err) / scale
            if enorm <= self.tol:
                seg = DenseSegment(self.t, h, self.y.copy(), (K.T @ P_DENSE))
                self.t += h
                self.y = y_new
                self.f0 = K[6]
                self.n_accepted += 1
                grow = SAFETY * (self.tol / max(enorm, 1e-300)) ** (1.0 / ORDER)
                self.h = h * min(5.0, max(0.2, grow))
                return seg
            self.n_rejected += 1
            shrink = SAFETY * (self.tol / enorm) ** (1.0 / ORDER)
            self.h = h * min(1.0, max(0.1, shrink))


class Trajectory:
    """Piecewise dense output collected from accepted steps."""

    def __init__(self):
        self.segments: list[DenseSegment] = []

    def append(self, seg: DenseSegment):
        self.segments.append(seg)

    @property
    def t_end(self) -> float:
        return self.segments[-1].t1 if self.segments else np.nan

    def __call__(self, t: float) -> np.ndarray:
        segs = self.segments
        if not segs:
            raise ValueError("empty trajectory")
        if t <= segs[0].t0:
            return segs[0](segs[0].t0)
        lo, hi = 0, len(segs) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if segs[mid].t1 < t:
                lo = mid + 1
            else:
                hi = mid
        return segs[lo](min(t, segs[lo].t1))
