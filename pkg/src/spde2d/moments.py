"""Exact second moments and covariances of triple increments (initial value 0).

With ``a = exp(-lambda Delta)`` and ``s`` the per-mode noise scale, the
coordinate increments satisfy

    E[(x_i - x_{i-1})^2] = s^2 (1 - a) / lambda - s^2 (1 - a)^2 a^{2(i-1)} / (2 lambda),
    Cov(dx_i, dx_i')     = -s^2 (1 - a)^2 (a^{|i-i'|-1} + a^{i+i'-2}) / (2 lambda),

times ``sigma^2``.  Summing against products of eigenfunction differences
over the cell corners gives the ``F`` series used below.

Two routes are provided.  :class:`MomentOracle` sums the series truncated at
``l1 <= Kmax, l2 <= Lmax`` (matching a simulator with the same truncation).
:func:`f_series_heat` evaluates the same series for Q1 noise, truncated or in
full (:func:`f_series_untruncated`), through

    lambda^{-1-alpha} (1 - e^{-lambda Delta})
        = (1 / Gamma(1 + alpha)) int_0^inf t^alpha (e^{-lambda t} - e^{-lambda (t + Delta)}) dt,

which turns the double sum into a product of one-dimensional sums, so very
large truncations and the full series cost no more than a small one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    PI2, ModelParams, NoiseKind, NoiseSpec, ThinnedSpatialGrid, ValidationError,
    basis_matrix, derive_constants, eigenvalue_grid, noise_scale_grid,
)
from .increments import SquaredIncrementStats
from .quadrature import integrate


@dataclass(frozen=True)
class SeriesTruncation:
    Kmax: int
    Lmax: int

    def __post_init__(self):
        if self.Kmax < 1 or self.Lmax < 1:
            raise ValidationError("series truncation must be at least 1 in each direction")


class MomentOracle:
    """Truncated-series moments of triple increments on a thinned grid.

    Indices ``i, j, k`` are 1-based as in the increment definition.
    """

    def __init__(self, p: ModelParams, noise: NoiseSpec, delta_t: float,
                 sgrid: ThinnedSpatialGrid, trunc: SeriesTruncation,
                 ys: Optional[np.ndarray] = None, zs: Optional[np.ndarray] = None):
        c = derive_constants(p)
        self.p, self.noise, self.delta_t = p, noise, float(delta_t)
        self.sigma_sq = p.sigma ** 2
        lam = eigenvalue_grid(p, trunc.Kmax, trunc.Lmax)
        s2 = noise_scale_grid(noise, p, trunc.Kmax, trunc.Lmax) ** 2
        self.lam = lam
        self.a = np.exp(-lam * self.delta_t)
        self.one_minus_a = -np.expm1(-lam * self.delta_t)
        self.base = s2 / lam  # s^2 / lambda
        ys = sgrid.ys if ys is None else np.asarray(ys, float)
        zs = sgrid.zs if zs is None else np.asarray(zs, float)
        self.y_mid, self.z_mid = 0.5 * (ys[1:] + ys[:-1]), 0.5 * (zs[1:] + zs[:-1])
        E1 = basis_matrix(trunc.Kmax, ys, c.kappa)
        E2 = basis_matrix(trunc.Lmax, zs, c.eta)
        self.D1 = E1[1:] - E1[:-1]  # (m1, K)
        self.D2 = E2[1:] - E2[:-1]  # (m2, L)
        # summation order: increasing l1^2 + l2^2
        l1 = np.arange(1, trunc.Kmax + 1)[:, None]
        l2 = np.arange(1, trunc.Lmax + 1)[None, :]
        self._order = np.argsort((l1 ** 2 + l2 ** 2).ravel(), kind="stable")

    def _sum(self, w: np.ndarray, j, k, j2, k2) -> float:
        prod = np.outer(self.D1[j - 1] * self.D1[j2 - 1], self.D2[k - 1] * self.D2[k2 - 1])
        return math.fsum((w * prod).ravel()[self._order])

    def f(self, j: int, k: int, j2: Optional[int] = None, k2: Optional[int] = None,
          J: Optional[int] = None) -> float:
        """``F^{j,k}_{j2,k2}`` (``J`` None) or ``F^{j,k}_{J,j2,k2}``."""
        j2 = j if j2 is None else j2
        k2 = k if k2 is None else k2
        if J is None:
            w = self.base * self.one_minus_a
        else:
            if J < 0:
                raise ValidationError("J must be non-negative")
            w = self.base * self.one_minus_a ** 2 * np.exp(-self.lam * J * self.delta_t)
        return self._sum(w, j, k, j2, k2)

    def second_moment(self, i: int, j: int, k: int) -> float:
        return self.cov(i, i, j, k, j, k)

    def cov(self, i: int, i2: int, j: int, k: int, j2: int, k2: int) -> float:
        if i < 1 or i2 < 1:
            raise ValidationError("time indices start at 1")
        if i == i2:
            return self.sigma_sq * (self.f(j, k, j2, k2) - 0.5 * self.f(j, k, j2, k2, J=2 * (i - 1)))
        return -0.5 * self.sigma_sq * (self.f(j, k, j2, k2, J=abs(i - i2) - 1)
                                       + self.f(j, k, j2, k2, J=i + i2 - 2))

    def expected_stats(self, N: int, alpha: float) -> SquaredIncrementStats:
        """Exact expectations of the normalised squared averages for every cell."""
        a = self.a
        v = 0.5 * self.sigma_sq * self.base  # stationary variance sigma^2 s^2 / (2 lambda)
        one = self.one_minus_a
        a2N = a ** (2 * N)
        # sum_{i=1}^N E[(x_i - x_{i-1})^2]
        wA = v * one * (2 * N - (1 - a2N) / (1 + a))
        # sum_{i=1}^{N-1} E[(x_{i+1} - x_{i-1})^2]
        one2 = -np.expm1(-2 * self.lam * self.delta_t)
        wT = v * one2 * (2 * (N - 1) - (1 - a ** (2 * (N - 1))))
        Q1, Q2 = self.D1 ** 2, self.D2 ** 2
        A = Q1 @ wA @ Q2.T / (N * self.delta_t ** alpha)
        At = Q1 @ wT @ Q2.T / (N * (2 * self.delta_t) ** alpha)
        return SquaredIncrementStats(A, At, self.y_mid, self.z_mid)


# ------------------------------------------------------------------ functional API


def f_series(j, k, j2, k2, J, p: ModelParams, noise: NoiseSpec, delta_t: float,
             sgrid: ThinnedSpatialGrid, trunc: Optional[SeriesTruncation]) -> float:
    """Truncated ``F`` series, or the full series when ``trunc`` is None (Q1 only)."""
    if trunc is None:
        return f_series_untruncated(j, k, j2, k2, J, p, noise, delta_t, sgrid)
    return MomentOracle(p, noise, delta_t, sgrid, trunc).f(j, k, j2, k2, J)


def exact_second_moment(i, j, k, p, noise, delta_t, sgrid, trunc, xi_zero: bool = True) -> float:
    if not xi_zero:
        raise ValidationError("exact moments are only available for a zero initial value")
    return MomentOracle(p, noise, delta_t, sgrid, trunc).second_moment(i, j, k)


def cov_triple_increments(i, i2, j, k, j2, k2, p, noise, delta_t, sgrid, trunc,
                          xi_zero: bool = True) -> float:
    if not xi_zero:
        raise ValidationError("exact moments are only available for a zero initial value")
    return MomentOracle(p, noise, delta_t, sgrid, trunc).cov(i, i2, j, k, j2, k2)


# ------------------------------------------------------------------ untruncated series


def _cos_theta_sum(a: np.ndarray, w: float) -> np.ndarray:
    """``sum_{l>=1} exp(-a l^2) cos(pi l w)`` for ``a > 0``."""
    out = np.empty_like(a)
    small = a < 1.0
    if small.any():
        aa = a[small]
        n = np.arange(-4, 5)[:, None]
        g = np.exp(-PI2 * (w - 2.0 * n) ** 2 / (4.0 * aa[None, :])).sum(axis=0)
        out[small] = 0.5 * (np.sqrt(math.pi / aa) * g - 1.0)
    if (~small).any():
        aa = a[~small]
        l = np.arange(1, 12)[:, None]
        out[~small] = (np.exp(-aa[None, :] * l ** 2) * np.cos(math.pi * l * w)).sum(axis=0)
    return out


def _axis_terms(pts_a, pts_b, decay):
    """Coefficients and shifts with ``D_a(l) D_b(l) = sum c (cos(pi l w-) - cos(pi l w+))``."""
    terms = []
    for ua, sa in ((pts_a[1], 1.0), (pts_a[0], -1.0)):
        for ub, sb in ((pts_b[1], 1.0), (pts_b[0], -1.0)):
            coef = sa * sb * math.exp(-decay * (ua + ub) / 2.0)
            # 2 sin(x) sin(y) = cos(x - y) - cos(x + y)
            terms.append((coef, ua - ub, ua + ub))
    return terms


def _heat_factor(t: np.ndarray, theta2: float, terms, modes: Optional[int] = None) -> np.ndarray:
    """``sum_l exp(-theta2 pi^2 l^2 t) D_a(l) D_b(l)`` over all ``l`` or ``l <= modes``."""
    a = theta2 * PI2 * t
    if modes is not None:
        l = np.arange(1, modes + 1, dtype=float)
        prod = np.zeros(modes)
        for coef, wm, wp in terms:
            prod += coef * (np.cos(math.pi * l * wm) - np.cos(math.pi * l * wp))
        flat = a.ravel()
        out = np.empty_like(flat)
        step = max(1, 2_000_000 // modes)
        for s in range(0, flat.size, step):
            out[s:s + step] = np.exp(-np.outer(flat[s:s + step], l * l)) @ prod
        return out.reshape(a.shape)
    out = np.zeros_like(t)
    for coef, wm, wp in terms:
        out += coef * (_cos_theta_sum(a, wm) - _cos_theta_sum(a, wp))
    return out


def f_series_heat(j, k, j2, k2, J, p: ModelParams, noise: NoiseSpec, delta_t: float,
                  sgrid: ThinnedSpatialGrid, trunc: Optional[SeriesTruncation] = None,
                  rel_tol: float = 1e-11) -> float:
    """``F`` series for Q1 noise through the heat-kernel representation.

    With ``trunc`` None the series is untruncated (theta sums in closed form);
    otherwise the one-dimensional sums stop at ``Kmax`` and ``Lmax``, which
    reproduces the rectangular truncation exactly.
    """
    if noise.kind is not NoiseKind.Q1:
        raise ValidationError("the heat-kernel route is implemented for Q1 noise only")
    c = derive_constants(p)
    alpha = noise.alpha
    ys, zs = sgrid.ys, sgrid.zs
    j2 = j if j2 is None else j2
    k2 = k if k2 is None else k2
    ty = _axis_terms((ys[j - 1], ys[j]), (ys[j2 - 1], ys[j2]), c.kappa)
    tz = _axis_terms((zs[k - 1], zs[k]), (zs[k2 - 1], zs[k2]), c.eta)
    shift = p.theta2 * c.gamma_big
    Ky = None if trunc is None else trunc.Kmax
    Kz = None if trunc is None else trunc.Lmax

    def P(t):
        return np.exp(-shift * t) * _heat_factor(t, p.theta2, ty, Ky) * _heat_factor(t, p.theta2, tz, Kz)

    d = delta_t
    if J is None:
        def diff(t):
            return P(t) - P(t + d)
    else:
        def diff(t):
            return P(t + J * d) - 2.0 * P(t + (J + 1) * d) + P(t + (J + 2) * d)

    # integrate over s = log t; the integrand decays like t^alpha at 0 and
    # like exp(-lambda_11 t) at infinity
    lam11 = p.theta2 * (2 * PI2 + c.gamma_big)
    s_lo = math.log(d) - 40.0 / alpha
    s_hi = math.log(60.0 / lam11)

    def g(s):
        t = np.exp(s)
        return t ** (alpha + 1.0) * diff(t)

    edges = np.linspace(s_lo, s_hi, 9)
    segs = list(zip(edges[:-1], edges[1:]))

    def coarse(h):
        return sum(abs(integrate(h, lo, hi, abs_tol=1e-300, rel_tol=1e-4, max_panels=4000,
                                 initial_panels=4)[0]) for lo, hi in segs)

    # the differences cancel, so rounding caps the attainable accuracy; the
    # floor is set against the undecayed series F, which the J-weighted
    # series always accompany in the moment formulas
    def size(s):
        t = np.exp(s)
        return t ** (alpha + 1.0) * np.abs(P(t) - P(t + d))

    seg_tol = max(rel_tol * coarse(g), 1e-13 * coarse(size)) / len(segs)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, _ = integrate(g, lo, hi, abs_tol=seg_tol, rel_tol=rel_tol, max_panels=8000,
                         initial_panels=4)
        total += v
    return total / math.gamma(1.0 + alpha)


def f_series_untruncated(j, k, j2, k2, J, p: ModelParams, noise: NoiseSpec, delta_t: float,
                         sgrid: ThinnedSpatialGrid, rel_tol: float = 1e-11) -> float:
    """Full (untruncated) ``F`` series for Q1 noise."""
    return f_series_heat(j, k, j2, k2, J, p, noise, delta_t, sgrid, None, rel_tol)
