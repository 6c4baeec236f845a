"""Bessel J0 and the scaling function psi of the squared triple increments.

``psi_{r,alpha}(theta2)`` is

    (2 / (theta2 pi)) int_0^inf (1 - exp(-x^2)) x^{-1-2 alpha} B(c x) dx,

with ``c = r / sqrt(theta2)`` and ``B(u) = J0(sqrt(2) u) - 2 J0(u) + 1``.

The ``1 - exp(-x^2)`` factor only decays algebraically, so a cut-off at the
crude bound ``|B| <= 4`` would need an enormous range.  Instead the integral is
split as

    int x^{-1-2a} B(c x) dx  -  int exp(-x^2) x^{-1-2a} B(c x) dx.

The first part has a closed form from the Mellin transform of J0,
``int_0^inf u^{s-1} J0(u) du = 2^{s-1} Gamma(s/2) / Gamma(1 - s/2)``, continued
to ``s = -2a`` (valid because ``B`` vanishes to fourth order at 0 and the
combination removes the constant).  The second part has a Gaussian factor and
is integrated by adaptive Gauss-Kronrod on ``[0, 1]`` and ``[1, X]`` with ``X``
chosen from the tail bound ``4 exp(-X^2) / (2 X^{2+2a})``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .model import ValidationError, theta2_lower_bound
from .quadrature import QuadratureError, integrate

__all__ = [
    "PsiRequest", "bessel_j0", "bracket", "psi", "psi_tilde", "psi_derivative",
    "psi_ratio_profile", "psi_reduced", "theta2_lower_bound", "PsiInterpolator",
    "QuadratureError",
]


# ------------------------------------------------------------------ J0

_SERIES_MAX = 5.0
_ASYMP_MIN = 25.0

# (-1)^k / (k!)^2, highest power first for Horner
_J0_SERIES = np.array([(-1) ** k / math.factorial(k) ** 2 for k in range(40)])[::-1]


def _j0_series(x):
    return np.polyval(_J0_SERIES, 0.25 * x * x)


def _j0_miller(x):
    # backward recurrence f_{k-1} = (2k/x) f_k - f_{k+1}, normalised by
    # J0 + 2 sum_{k>=1} J_{2k} = 1
    top = int(2 * math.ceil((1.5 * float(np.max(x)) + 40) / 2))
    f_next = np.zeros_like(x)
    f = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    for k in range(top, 0, -1):
        if k % 2 == 0:
            norm += 2.0 * f
        f_prev = (2.0 * k / x) * f - f_next
        f_next, f = f, f_prev
        big = np.abs(f) > 1e200
        if big.any():
            f = np.where(big, f * 1e-200, f)
            f_next = np.where(big, f_next * 1e-200, f_next)
            norm = np.where(big, norm * 1e-200, norm)
    return f / (norm + f)


def _j0_hankel(x):
    inv8x = 1.0 / (8.0 * x)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(0, 40):
        if k > 0:
            term = term * ((2 * k - 1) ** 2) * inv8x / k
        if k % 4 == 0:
            p += term
        elif k % 4 == 1:
            q -= term
        elif k % 4 == 2:
            p -= term
        else:
            q += term
    c, s = np.cos(x), np.sin(x)
    # cos(x - pi/4) and sin(x - pi/4) without subtracting pi/4 from a large x
    cm = (c + s) / math.sqrt(2.0)
    sm = (s - c) / math.sqrt(2.0)
    return np.sqrt(2.0 / (math.pi * x)) * (p * cm - q * sm)


def bessel_j0(x):
    """Bessel function of the first kind of order zero.

    Ascending series for ``|x| <= 5``, Miller backward recurrence on
    ``(5, 25)`` and the Hankel asymptotic expansion from 25 on.  Absolute
    error stays below ``1e-13`` on ``[0, 1e4]``.
    """
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x <= _SERIES_MAX
    large = x >= _ASYMP_MIN
    mid = ~(small | large)
    if small.any():
        out[small] = _j0_series(x[small])
    if mid.any():
        out[mid] = _j0_miller(x[mid])
    if large.any():
        out[large] = _j0_hankel(x[large])
    return float(out) if out.ndim == 0 else out


# coefficients of u^{2k} in B(u), k = 2..
_B_SERIES = np.array([
    (-1) ** k / math.factorial(k) ** 2 * (2.0 ** -k - 2.0 * 4.0 ** -k) for k in range(2, 30)
])[::-1]
_B_SWITCH = 2.0


def bracket(u):
    """``J0(sqrt(2) u) - 2 J0(u) + 1``; a series in ``u^2`` near zero avoids cancellation."""
    u = np.abs(np.asarray(u, dtype=float))
    out = np.empty_like(u)
    small = u < _B_SWITCH
    if small.any():
        v = u[small] ** 2
        out[small] = np.polyval(_B_SERIES, v) * v * v
    if (~small).any():
        ul = u[~small]
        out[~small] = bessel_j0(math.sqrt(2.0) * ul) - 2.0 * bessel_j0(ul) + 1.0
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------ psi

@dataclass(frozen=True)
class PsiRequest:
    r: float
    alpha: float
    theta2: float
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9

    def __post_init__(self):
        if not self.r > 0:
            raise ValidationError(f"r must be positive, got {self.r}")
        if not 0.0 < self.alpha < 2.0:
            raise ValidationError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not self.theta2 > 0:
            raise ValidationError(f"theta2 must be positive, got {self.theta2}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValidationError("tolerances must be positive")


def mellin_constant(alpha: float) -> float:
    """``int_0^inf u^{-1-2 alpha} B(u) du`` in closed form."""
    eps = alpha - 1.0
    # (2^eps - 1) / eps, continuous through alpha = 1
    h = math.log(2.0) if eps == 0.0 else math.expm1(eps * math.log(2.0)) / eps
    return 2.0 ** (-2.0 * alpha) * math.gamma(2.0 - alpha) * h / (alpha * math.gamma(1.0 + alpha))


def _tail_cutoff(alpha: float, tol: float) -> float:
    # smallest X (on a coarse ladder) with 4 e^{-X^2} / (2 X^{2+2a}) < tol
    X = 2.0
    while 2.0 * math.exp(-X * X) / X ** (2.0 + 2.0 * alpha) >= tol:
        X += 0.25
        if X > 40:
            raise QuadratureError("tail bound cannot be met")
    return X


def _gauss_part(c: float, alpha: float, abs_tol: float, rel_tol: float) -> float:
    """``int_0^inf exp(-x^2) x^{-1-2a} B(c x) dx``."""
    X = _tail_cutoff(alpha, 0.1 * abs_tol)

    def f(x):
        return np.exp(-x * x) * x ** (-1.0 - 2.0 * alpha) * bracket(c * x)

    lo, _ = integrate(f, 0.0, 1.0, abs_tol=0.4 * abs_tol, rel_tol=rel_tol, max_panels=8000)
    n0 = max(1, int(math.ceil(c * (X - 1.0) / 4.0)))
    hi, _ = integrate(f, 1.0, X, abs_tol=0.4 * abs_tol, rel_tol=rel_tol,
                      max_panels=8000, initial_panels=n0)
    return lo + hi


def scaled_integral(c: float, alpha: float, abs_tol: float = 1e-13, rel_tol: float = 1e-12) -> float:
    """``I(c) = int_0^inf (1 - exp(-x^2)) x^{-1-2a} B(c x) dx`` so ``psi = 2 I / (theta2 pi)``."""
    return c ** (2.0 * alpha) * mellin_constant(alpha) - _gauss_part(c, alpha, abs_tol, rel_tol)


def psi(req: PsiRequest) -> float:
    """Scaling constant ``psi_{r,alpha}(theta2)``; strictly positive."""
    pref = 2.0 / (req.theta2 * math.pi)
    c = req.r / math.sqrt(req.theta2)
    # the inner tolerances are on I, which is multiplied by pref
    val = pref * scaled_integral(c, req.alpha, abs_tol=req.abs_tol / pref,
                                 rel_tol=min(req.rel_tol, 1e-9))
    if not (np.isfinite(val) and val > 0):
        raise QuadratureError(f"psi evaluation failed for {req}: got {val}")
    return val


def psi_tilde(req: PsiRequest) -> float:
    """``theta2^alpha * psi``; the Q2-noise analogue."""
    return req.theta2 ** req.alpha * psi(req)


def psi_derivative(req: PsiRequest) -> float:
    """Central finite difference of ``psi`` in ``theta2`` with step ``1e-5 max(1, theta2)``."""
    h = 1e-5 * max(1.0, req.theta2)
    if req.theta2 - h <= 0:
        h = 0.5 * req.theta2
    up = psi(PsiRequest(req.r, req.alpha, req.theta2 + h, req.abs_tol, req.rel_tol))
    dn = psi(PsiRequest(req.r, req.alpha, req.theta2 - h, req.abs_tol, req.rel_tol))
    return (up - dn) / (2.0 * h)


def psi_ratio_profile(r: float, alpha: float, theta2_grid) -> list:
    """``psi_{r,alpha}(theta2) / psi_{r/sqrt2,alpha}(theta2)`` at each grid point."""
    lb = theta2_lower_bound(r, alpha)
    out = []
    for t in theta2_grid:
        if not t > lb:
            raise ValidationError(f"theta2={t} is not above the lower bound {lb}")
        out.append(psi(PsiRequest(r, alpha, t)) / psi(PsiRequest(r / math.sqrt(2.0), alpha, t)))
    return out


def psi_reduced(t: float, alpha: float, abs_tol: float = 1e-13) -> float:
    """``int_0^inf (1 - exp(-t x^2)) x^{-1-2a} B(x) dx``.

    Integrated directly in ``x`` at unit Bessel frequency with the Gaussian
    width ``1/sqrt(t)``, a different sampling from :func:`psi`.
    """
    if not t > 0:
        raise ValidationError("t must be positive")
    X = _tail_cutoff(alpha, 0.1 * abs_tol * t ** alpha) / math.sqrt(t)

    def f(x):
        return np.exp(-t * x * x) * x ** (-1.0 - 2.0 * alpha) * bracket(x)

    a, _ = integrate(f, 0.0, 1.0, abs_tol=0.4 * abs_tol, rel_tol=1e-12, max_panels=8000)
    b, _ = integrate(f, 1.0, max(X, 2.0), abs_tol=0.4 * abs_tol, rel_tol=1e-12, max_panels=8000,
                     initial_panels=max(1, int(X / 4)))
    return mellin_constant(alpha) - (a + b)


# ------------------------------------------------------------------ interpolation

class PsiInterpolator:
    """Cubic spline of ``log I`` against ``log c`` for fixed ``(r, alpha)``.

    Covers ``theta2`` in ``[theta2_lo, theta2_hi]``.  The node count doubles
    until the spline reproduces direct evaluations at all cell midpoints to
    relative error ``tol``.
    """

    def __init__(self, r: float, alpha: float, theta2_lo: float, theta2_hi: float,
                 tol: float = 1e-9, n_start: int = 48, n_max: int = 3000):
        if not 0 < theta2_lo < theta2_hi:
            raise ValidationError("need 0 < theta2_lo < theta2_hi")
        self.r, self.alpha = float(r), float(alpha)
        self.theta2_lo, self.theta2_hi = float(theta2_lo), float(theta2_hi)
        lc_lo = math.log(r / math.sqrt(theta2_hi))
        lc_hi = math.log(r / math.sqrt(theta2_lo))
        n = n_start
        nodes = np.linspace(lc_lo, lc_hi, n + 1)
        vals = np.log([scaled_integral(math.exp(v), alpha) for v in nodes])
        while True:
            spline = CubicSpline(nodes, vals)
            mids = 0.5 * (nodes[:-1] + nodes[1:])
            mvals = np.log([scaled_integral(math.exp(v), alpha) for v in mids])
            err = np.max(np.abs(np.expm1(spline(mids) - mvals)))
            if err < tol:
                break
            if 2 * n > n_max:
                raise QuadratureError(f"psi interpolation error {err:.2e} exceeds {tol:.1e}")
            merged = np.empty(2 * n + 1)
            merged[0::2], merged[1::2] = nodes, mids
            mv = np.empty(2 * n + 1)
            mv[0::2], mv[1::2] = vals, mvals
            nodes, vals, n = merged, mv, 2 * n
        self.spline = spline
        self.max_rel_error = float(err)
        self.n_nodes = n + 1

    def __call__(self, theta2):
        theta2 = np.asarray(theta2, dtype=float)
        if np.any(theta2 < self.theta2_lo * (1 - 1e-12)) or np.any(theta2 > self.theta2_hi * (1 + 1e-12)):
            raise ValidationError("theta2 outside the interpolation range")
        lc = np.log(self.r / np.sqrt(theta2))
        out = 2.0 / (theta2 * math.pi) * np.exp(self.spline(lc))
        return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def cached_interpolator(r: float, alpha: float, theta2_lo: float, theta2_hi: float) -> PsiInterpolator:
    return PsiInterpolator(r, alpha, theta2_lo, theta2_hi)
