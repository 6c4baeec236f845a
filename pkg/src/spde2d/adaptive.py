"""Adaptive plug-in estimators built from approximate coordinate processes.

The first stage (minimum contrast) supplies ``kappa, eta, theta2, sigma^2``.
The field is projected onto modes (1,1) and (1,2) with the estimated weight,
and the realised quadratic variation of each projection estimates the mode
volatility ``sigma^2 lambda^{-alpha}`` (Q1) or ``sigma^2 mu^{-alpha}`` (Q2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .mce import MceResult
from .model import PI2, ObservationGrid, ThinnedTemporalGrid, ValidationError
from .simulate import FieldSample


class PreconditionError(ValueError):
    """An estimator's input ordering condition failed on this data set."""


@dataclass
class CoordinateEstimate:
    mode: Tuple[int, int]
    times: np.ndarray
    values: np.ndarray
    kappa_hat: float
    eta_hat: float


@dataclass
class AdaptiveReport:
    kind: str
    sigma_hat_sq: Dict[str, float]
    names: List[str]
    estimates: Dict[str, float]
    covariance: np.ndarray
    n: int
    lambda_check: Dict[str, float] = field(default_factory=dict)
    rate_condition: Dict[str, float] = field(default_factory=dict)

    @property
    def standard_errors(self) -> Dict[str, float]:
        d = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None) / self.n)
        return dict(zip(self.names, d.tolist()))

    def as_dict(self) -> dict:
        return {
            "kind": self.kind, "n": self.n, "sigma_hat_sq": self.sigma_hat_sq,
            "lambda_check": self.lambda_check, "estimates": self.estimates,
            "standard_errors": self.standard_errors, "names": self.names,
            "covariance": self.covariance.tolist(), "rate_condition": self.rate_condition,
        }


# ------------------------------------------------------------------ coordinates


def approximate_coordinate(sample: FieldSample, grid: ObservationGrid, tgrid: ThinnedTemporalGrid,
                           mode: Tuple[int, int], kappa_hat: float, eta_hat: float) -> CoordinateEstimate:
    """Weighted Riemann-sum projection of the grid field onto one eigenfunction.

    Sums run over ``j = 1..M1`` and ``k = 1..M2``; the last index sits on the
    boundary, where the field and the sine both vanish.
    """
    l1, l2 = mode
    ys, zs = grid.ys[1:], grid.zs[1:]
    try:
        cols = sample.columns(ys, zs)
        rows = sample.rows(tgrid.indices)
    except KeyError as e:
        raise ValidationError(f"sample does not cover the observation grid: {e.args[0]}") from None
    X = sample.values[rows][:, cols]  # (n+1, M1, M2)
    wy = np.sin(math.pi * l1 * ys) * np.exp(kappa_hat * ys / 2.0)
    wz = np.sin(math.pi * l2 * zs) * np.exp(eta_hat * zs / 2.0)
    vals = 2.0 / (grid.M1 * grid.M2) * np.einsum("tjk,j,k->t", X, wy, wz)
    return CoordinateEstimate((l1, l2), tgrid.times, vals, kappa_hat, eta_hat)


def sigma_hat_sq(coord: CoordinateEstimate) -> float:
    """Realised quadratic variation of the projected path (not rescaled by the horizon)."""
    if coord.values.size < 3:
        raise ValidationError("need at least two increments")
    d = np.diff(coord.values)
    return float(d @ d)


def rate_condition(n: int, M1: int, M2: int, alpha: float, tau: float = 0.49) -> Dict[str, float]:
    """Both rate quantities ``n^{e - alpha + tau} / min(M1, M2)^{2 tau}`` for ``e = 1, 2``."""
    M = min(M1, M2)
    return {
        "tau": tau,
        "n^(1-alpha+tau)/M^(2tau)": n ** (1 - alpha + tau) / M ** (2 * tau),
        "n^(2-alpha+tau)/M^(2tau)": n ** (2 - alpha + tau) / M ** (2 * tau),
    }


# ------------------------------------------------------------------ Q1


def _rank_one(v: np.ndarray) -> np.ndarray:
    return np.outer(v, v)


def covariance_j(lam11: float, lam12: float, theta1: float, eta1: float, theta2: float,
                 sigma_sq: float, alpha: float, variant: str = "displayed") -> np.ndarray:
    """Asymptotic covariance of ``sqrt(n)`` times the Q1 estimation errors.

    Order: ``theta0, theta1, eta1, theta2, sigma^2``.  ``variant="displayed"``
    uses the published blocks; ``"delta"`` uses the delta-method blocks
    ``lambda11^2 / alpha^2`` and ``+lambda11^2 v / (3 pi^2 theta2 alpha^2)``
    for the first row (the lower-right block is the same in both).
    """
    v = np.array([theta1, eta1, theta2, sigma_sq])
    j22 = (lam11 ** 2 + lam12 ** 2) / (9 * PI2 ** 2 * theta2 ** 2 * alpha ** 2) * _rank_one(v)
    if variant == "displayed":
        j11 = lam11 ** 2
        j12 = -lam11 ** 2 / (3 * PI2 * theta2) * v
    elif variant == "delta":
        j11 = lam11 ** 2 / alpha ** 2
        j12 = lam11 ** 2 / (3 * PI2 * theta2 * alpha ** 2) * v
    else:
        raise ValidationError(f"unknown covariance variant {variant!r}")
    out = np.empty((5, 5))
    out[0, 0] = j11
    out[0, 1:] = j12
    out[1:, 0] = j12
    out[1:, 1:] = j22
    return 2.0 * out


def adaptive_estimators_q1(sigma11: float, sigma12: float, mce: MceResult, alpha: float,
                           n: int = 1, variant: str = "displayed") -> AdaptiveReport:
    if not (sigma11 > 0 and sigma12 > 0):
        raise ValidationError("quadratic variations must be positive")
    if not mce.nu_hat.theta2 > 0:
        raise ValidationError("first-stage theta2 must be positive")
    k, e, t2, s2 = mce.nu_hat.kappa, mce.nu_hat.eta, mce.nu_hat.theta2, mce.nu_hat.sigma_sq
    lam11 = (s2 / sigma11) ** (1.0 / alpha)
    lam12 = (s2 / sigma12) ** (1.0 / alpha)
    theta0 = -lam11 + ((k * k + e * e) / 4.0 + 2.0 * PI2) * t2
    theta2 = (lam12 - lam11) / (3.0 * PI2)
    est = {"theta0": theta0, "theta1": k * theta2, "eta1": e * theta2,
           "theta2": theta2, "sigma_sq": s2 / t2 * theta2}
    cov = covariance_j(lam11, lam12, est["theta1"], est["eta1"], theta2, est["sigma_sq"], alpha, variant)
    return AdaptiveReport("Q1", {"11": sigma11, "12": sigma12}, list(est), est, cov, n,
                          {"11": lam11, "12": lam12})


# ------------------------------------------------------------------ Q2


def covariance_k(theta1, eta1, theta2, sigma_sq) -> np.ndarray:
    """Known-shift covariance ``2 v v^T`` for ``theta1, eta1, theta2, sigma^2``."""
    return 2.0 * _rank_one(np.array([theta1, eta1, theta2, sigma_sq]))


def covariance_l(mu11, mu12, theta1, eta1, theta2, sigma_sq, alpha) -> np.ndarray:
    """Unknown-shift covariance for ``mu0, theta1, eta1, theta2, sigma^2``."""
    v = np.array([theta1, eta1, theta2, sigma_sq])
    out = np.empty((5, 5))
    out[0, 0] = 2.0 * mu11 ** 2 * mu12 ** 2 / alpha ** 2
    l12 = mu11 * mu12 * (mu11 + mu12) / alpha * v
    out[0, 1:] = l12
    out[1:, 0] = l12
    out[1:, 1:] = (mu11 ** 2 + mu12 ** 2) * _rank_one(v)
    return 2.0 / (9.0 * PI2 ** 2) * out


def adaptive_estimators_q2(sigma11: float, sigma12: float, mce: MceResult, alpha: float,
                           mu0: Optional[float] = None, n: int = 1) -> AdaptiveReport:
    """Known ``mu0``: bar estimators with the rank-one covariance.  ``mu0=None``:
    breve estimators, including the shift, with the unknown-shift covariance."""
    if not (sigma11 > 0 and sigma12 > 0):
        raise ValidationError("quadratic variations must be positive")
    k, e, t2, s2 = mce.nu_hat.kappa, mce.nu_hat.eta, mce.nu_hat.theta2, mce.nu_hat.sigma_sq
    if not t2 > 0:
        raise ValidationError("first-stage theta2 must be positive")
    if mu0 is not None:
        mu11 = 2.0 * PI2 + mu0
        if mu11 <= 0:
            raise ValidationError("mu0 must exceed -2 pi^2")
        sig = mu11 ** alpha * sigma11
        th2 = t2 / s2 * sig
        est = {"theta1": k * th2, "eta1": e * th2, "theta2": th2, "sigma_sq": sig}
        cov = covariance_k(est["theta1"], est["eta1"], th2, sig)
        return AdaptiveReport("Q2-known", {"11": sigma11, "12": sigma12}, list(est), est, cov, n)
    u11 = sigma11 ** (-1.0 / alpha)
    u12 = sigma12 ** (-1.0 / alpha)
    if not u12 > u11:
        raise PreconditionError(
            "unknown-shift estimator needs sigma12^(-1/alpha) > sigma11^(-1/alpha); "
            f"got {u12:.6g} <= {u11:.6g}")
    sig = (3.0 * PI2 / (u12 - u11)) ** alpha
    mu0_hat = (sig / sigma11) ** (1.0 / alpha) - 2.0 * PI2
    th2 = t2 / s2 * sig
    est = {"mu0": mu0_hat, "theta1": k * th2, "eta1": e * th2, "theta2": th2, "sigma_sq": sig}
    cov = covariance_l(mu0_hat + 2 * PI2, mu0_hat + 5 * PI2, est["theta1"], est["eta1"], th2, sig, alpha)
    return AdaptiveReport("Q2-unknown", {"11": sigma11, "12": sigma12}, list(est), est, cov, n)
