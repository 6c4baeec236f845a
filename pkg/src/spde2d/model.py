"""Model parameters, observation grids and the eigen-system of the operator.

The SPDE on the unit square with Dirichlet boundary conditions is

    dX_t = {theta2 (d_yy + d_zz) + theta1 d_y + eta1 d_z + theta0} X_t dt
           + sigma dW_t,

and its coordinate processes with respect to the eigenfunctions
``e_{l1,l2}(y, z) = e_{l1}(y) e_{l2}(z)`` are independent Ornstein-Uhlenbeck
processes.  Everything downstream assumes objects from this module have been
validated on construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

PI2 = math.pi ** 2


class ValidationError(ValueError):
    """Raised when parameters or grids violate a standing assumption."""


@dataclass(frozen=True)
class ModelParams:
    theta0: float
    theta1: float
    eta1: float
    theta2: float
    sigma: float

    def __post_init__(self):
        for name in ("theta0", "theta1", "eta1", "theta2", "sigma"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v!r}")
        if self.theta2 <= 0:
            raise ValidationError(f"theta2 must be > 0, got {self.theta2}")
        if self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")
        lam11 = self.theta2 * (2 * PI2 + derive_constants(self).gamma_big)
        if lam11 <= 0:
            raise ValidationError(
                f"lambda_11 = {lam11:.6g} must be positive (operator must be positive)"
            )

    @property
    def constants(self) -> "DerivedConstants":
        return derive_constants(self)


# Reference simulation truth.
PAPER_TRUTH = dict(theta0=0.0, theta1=0.2, eta1=0.2, theta2=0.2, sigma=1.0)


@dataclass(frozen=True)
class DerivedConstants:
    kappa: float
    eta: float
    gamma_big: float


def derive_constants(p: ModelParams) -> DerivedConstants:
    """Return ``(kappa, eta, Gamma)`` for the drift coefficients of ``p``."""
    if p.theta2 <= 0:
        raise ValidationError(f"theta2 must be > 0, got {p.theta2}")
    kappa = p.theta1 / p.theta2
    eta = p.eta1 / p.theta2
    gamma_big = -p.theta0 / p.theta2 + (kappa ** 2 + eta ** 2) / 4
    return DerivedConstants(kappa, eta, gamma_big)


def params_from_constants(kappa, eta, gamma_big, theta2, sigma) -> ModelParams:
    """Inverse of :func:`derive_constants` (given ``theta2`` and ``sigma``)."""
    return ModelParams(
        theta0=theta2 * ((kappa ** 2 + eta ** 2) / 4 - gamma_big),
        theta1=kappa * theta2,
        eta1=eta * theta2,
        theta2=theta2,
        sigma=sigma,
    )


class NoiseKind(str, Enum):
    Q1 = "Q1"
    Q2 = "Q2"


@dataclass(frozen=True)
class NoiseSpec:
    """Driving noise: ``Q1`` scales mode (l1, l2) by ``lambda^{-alpha/2}``,
    ``Q2`` by ``mu^{-alpha/2}`` with ``mu = pi^2 (l1^2 + l2^2) + mu0``."""

    kind: NoiseKind = NoiseKind.Q1
    alpha: float = 0.5
    mu0: Optional[float] = None
    mu0_known: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not (0.0 < self.alpha < 2.0):
            raise ValidationError(f"alpha must lie in the open interval (0, 2), got {self.alpha}")
        if self.kind is NoiseKind.Q2:
            if self.mu0 is None:
                raise ValidationError("Q2 noise requires mu0")
            if not self.mu0 > -2 * PI2:
                raise ValidationError(f"mu0 must exceed -2 pi^2, got {self.mu0}")


def eigenvalue(p: ModelParams, l1, l2):
    """``lambda_{l1,l2} = theta2 (pi^2 (l1^2 + l2^2) + Gamma)``; broadcasts over arrays."""
    l1 = np.asarray(l1)
    l2 = np.asarray(l2)
    if np.any(l1 < 1) or np.any(l2 < 1):
        raise ValidationError("mode indices start at 1")
    g = derive_constants(p).gamma_big
    out = p.theta2 * (PI2 * (l1.astype(float) ** 2 + l2.astype(float) ** 2) + g)
    return float(out) if out.ndim == 0 else out


def eigenvalue_grid(p: ModelParams, K: int, L: int) -> np.ndarray:
    """Eigenvalues for ``l1 = 1..K`` (rows) and ``l2 = 1..L`` (columns)."""
    l1 = np.arange(1, K + 1, dtype=float)[:, None]
    l2 = np.arange(1, L + 1, dtype=float)[None, :]
    g = derive_constants(p).gamma_big
    return p.theta2 * (PI2 * (l1 ** 2 + l2 ** 2) + g)


def eigenfunction_1d(l, x, decay: float) -> np.ndarray:
    """``sqrt(2) sin(pi l x) exp(-decay x / 2)``.

    ``l`` and ``x`` broadcast; use ``l[:, None]`` against ``x[None, :]`` for a
    mode-by-point basis matrix.
    """
    l = np.asarray(l, dtype=float)
    x = np.asarray(x, dtype=float)
    return math.sqrt(2.0) * np.sin(math.pi * l * x) * np.exp(-decay * x / 2.0)


def basis_matrix(n_modes: int, x, decay: float) -> np.ndarray:
    """Matrix ``E[p, l-1] = e_l(x_p)`` of shape ``(len(x), n_modes)``."""
    x = np.asarray(x, dtype=float)
    l = np.arange(1, n_modes + 1, dtype=float)
    E = eigenfunction_1d(l[None, :], x[:, None], decay)
    # sin(pi l x) is not exactly zero in floating point at x = 1
    E[(x == 0.0) | (x == 1.0), :] = 0.0
    return E


def eigenfunction_2d(p: ModelParams, l1, l2, y, z):
    c = derive_constants(p)
    out = eigenfunction_1d(l1, y, c.kappa) * eigenfunction_1d(l2, z, c.eta)
    y = np.asarray(y)
    z = np.asarray(z)
    out = np.where((y == 0) | (y == 1) | (z == 0) | (z == 1), 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def noise_scale(spec: NoiseSpec, p: ModelParams, l1, l2):
    """Per-mode noise scale ``s``; the OU volatility of mode (l1, l2) is ``sigma * s``."""
    if spec.kind is NoiseKind.Q1:
        base = np.asarray(eigenvalue(p, l1, l2), dtype=float)
        label = "lambda"
    else:
        l1a = np.asarray(l1, dtype=float)
        l2a = np.asarray(l2, dtype=float)
        base = PI2 * (l1a ** 2 + l2a ** 2) + spec.mu0
        label = "mu"
    if np.any(base <= 0):
        raise ValidationError(f"{label} must be positive for every mode")
    out = base ** (-spec.alpha / 2.0)
    return float(out) if np.ndim(out) == 0 else out


def noise_scale_grid(spec: NoiseSpec, p: ModelParams, K: int, L: int) -> np.ndarray:
    l1 = np.arange(1, K + 1)[:, None]
    l2 = np.arange(1, L + 1)[None, :]
    return np.asarray(noise_scale(spec, p, l1, l2), dtype=float)


def weighted_inner(p: ModelParams, u, v, n: int = 400) -> float:
    """Weighted L2 inner product on the unit square by Gauss-Legendre quadrature.

    ``u`` and ``v`` are callables of ``(y, z)`` arrays.
    """
    c = derive_constants(p)
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    Y, Z = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w) * np.exp(c.kappa * Y) * np.exp(c.eta * Z)
    return float(np.sum(W * u(Y, Z) * v(Y, Z)))


# ---------------------------------------------------------------- grids


@dataclass(frozen=True)
class ObservationGrid:
    N: int
    M1: int
    M2: int

    def __post_init__(self):
        for name in ("N", "M1", "M2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")

    @property
    def delta(self) -> float:
        return 1.0 / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    @property
    def ys(self) -> np.ndarray:
        return np.arange(self.M1 + 1) / self.M1

    @property
    def zs(self) -> np.ndarray:
        return np.arange(self.M2 + 1) / self.M2


@dataclass(frozen=True)
class ThinnedSpatialGrid:
    """Interior sub-grid ``b + j delta``, ``j = 0..m1``, with ``delta = (1 - 2b) / m1``."""

    b: float
    m1: int
    m2: int
    N: int  # temporal resolution, fixes r = delta / sqrt(1/N)

    def __post_init__(self):
        if not (0.0 < self.b < 0.5):
            raise ValidationError(f"b must lie in (0, 1/2), got {self.b}")
        if self.m1 != self.m2:
            raise ValidationError(f"m1 and m2 must be equal, got {self.m1} and {self.m2}")
        if self.m1 < 1 or int(self.m1) != self.m1:
            raise ValidationError(f"m1 must be a positive integer, got {self.m1!r}")
        if self.N < 1:
            raise ValidationError("N must be positive")

    @property
    def delta(self) -> float:
        return (1.0 - 2.0 * self.b) / self.m1

    @property
    def r(self) -> float:
        return self.delta * math.sqrt(self.N)

    @property
    def m(self) -> int:
        return self.m1 * self.m2

    @property
    def ys(self) -> np.ndarray:
        ys = self.b + np.arange(self.m1 + 1) * self.delta
        ys[-1] = 1.0 - self.b
        return ys

    @property
    def zs(self) -> np.ndarray:
        zs = self.b + np.arange(self.m2 + 1) * self.delta
        zs[-1] = 1.0 - self.b
        return zs

    @property
    def y_mid(self) -> np.ndarray:
        ys = self.ys
        return 0.5 * (ys[:-1] + ys[1:])

    @property
    def z_mid(self) -> np.ndarray:
        zs = self.zs
        return 0.5 * (zs[:-1] + zs[1:])


def b_for_r(r: float, N: int, m1: int) -> float:
    """Margin ``b`` giving ``delta / sqrt(Delta) = r`` for the given ``N`` and ``m1``."""
    return 0.5 * (1.0 - r * m1 / math.sqrt(N))


@dataclass(frozen=True)
class ThinnedTemporalGrid:
    n: int
    N: int

    def __post_init__(self):
        if not (1 <= self.n <= self.N):
            raise ValidationError(f"need 1 <= n <= N, got n={self.n}, N={self.N}")

    @property
    def stride(self) -> int:
        return self.N // self.n

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.stride

    @property
    def times(self) -> np.ndarray:
        return self.indices / self.N


def theta2_lower_bound(r: float, alpha: float) -> float:
    """Lower end of the admissible ``theta2`` range for the contrast."""
    if r <= 0:
        raise ValidationError("r must be positive")
    if not (0.0 < alpha < 2.0):
        raise ValidationError("alpha must lie in (0, 2)")
    if alpha >= 1.0:
        return 0.0
    return -r * r / (8.0 * math.log(2.0 ** (alpha / 2.0) - 1.0))
