import math

import mpmath as mp
import numpy as np
import pytest
import scipy.special

from oracles.psi_values import PSI_ORACLE
from spde2d.model import ValidationError, theta2_lower_bound
from spde2d.quadrature import QuadratureError, integrate
from spde2d.specfun import (
    PsiInterpolator, PsiRequest, _gauss_part, _tail_cutoff, bessel_j0, bracket,
    mellin_constant, psi, psi_derivative, psi_ratio_profile, psi_reduced, psi_tilde,
    scaled_integral,
)


# ------------------------------------------------------------------ quadrature

def test_kronrod_rule_exact_for_polynomials():
    f = lambda x: x ** 22 - 3 * x ** 7 + 1.0
    v, _ = integrate(f, -1.0, 2.0, abs_tol=1e-14, rel_tol=1e-14)
    exact = (2 ** 23 + 1) / 23 - 3 * (2 ** 8 - 1) / 8 + 3
    assert v == pytest.approx(exact, rel=1e-14)


def test_adaptive_refinement_on_endpoint_singularity():
    v, err = integrate(lambda x: x ** -0.5, 0.0, 1.0, abs_tol=1e-10, rel_tol=1e-10, max_panels=4000)
    assert v == pytest.approx(2.0, abs=1e-9)
    assert err < 1e-9


def test_quadrature_reports_non_convergence():
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.sin(1e4 * x), 0.0, 10.0, abs_tol=1e-14, rel_tol=1e-14, max_panels=4)


# ------------------------------------------------------------------ J0

def test_j0_special_values():
    assert bessel_j0(0.0) == 1.0
    assert bessel_j0(1.0) == pytest.approx(0.7651976865579666, abs=1e-15)
    assert bessel_j0(-3.7) == bessel_j0(3.7)
    assert bessel_j0(2.4) > 0 > bessel_j0(2.41)
    # bisection of the first zero
    a, b = 2.4, 2.41
    for _ in range(60):
        m = 0.5 * (a + b)
        a, b = (m, b) if bessel_j0(m) > 0 else (a, m)
    assert a == pytest.approx(2.404825557695773, abs=1e-12)


def test_j0_against_reference_implementations():
    x = np.concatenate([np.linspace(0, 60, 6001), np.geomspace(60, 1e4, 2000)])
    assert np.max(np.abs(bessel_j0(x) - scipy.special.j0(x))) < 1e-13
    mp.mp.dps = 30
    for v in (0.3, 4.99, 5.01, 12.5, 24.99, 25.01, 137.0, 9876.5):
        assert bessel_j0(v) == pytest.approx(float(mp.besselj(0, v)), abs=1e-14)


def test_bracket_small_argument_series():
    # the direct formula cancels catastrophically near 0, so compare with extended precision
    mp.mp.dps = 40
    for u in (1e-4, 1e-2, 0.3, 1.9, 2.1, 7.5):
        ref = mp.besselj(0, mp.sqrt(2) * u) - 2 * mp.besselj(0, u) + 1
        assert bracket(u) == pytest.approx(float(ref), rel=1e-12)
    # fourth-order vanishing with leading coefficient 1/32
    assert bracket(1e-3) / 1e-12 == pytest.approx(1 / 32, rel=1e-5)


# ------------------------------------------------------------------ psi

@pytest.mark.parametrize("r,alpha,theta2,expected", PSI_ORACLE)
def test_psi_matches_high_precision_oracle(r, alpha, theta2, expected):
    assert psi(PsiRequest(r, alpha, theta2)) == pytest.approx(expected, abs=1e-8)


def test_psi_integrand_vanishes_at_origin():
    # (1 - e^{-x^2}) x^{-1-2a} B(c x) ~ c^4 x^{5-2a} / 32
    c, a = 0.98382 / math.sqrt(0.2), 1.5
    for x in (1e-3, 1e-4):
        val = -math.expm1(-x * x) * x ** (-1 - 2 * a) * bracket(c * x)
        assert val == pytest.approx(c ** 4 * x ** (5 - 2 * a) / 32, rel=1e-4)


def test_psi_scaling_identity():
    rng = np.random.default_rng(11)
    for _ in range(8):
        r, a, t, c = rng.uniform(0.3, 1.6), rng.uniform(0.2, 1.8), rng.uniform(0.2, 2.0), rng.uniform(0.3, 3.0)
        lhs = psi(PsiRequest(r, a, t))
        rhs = psi(PsiRequest(r / math.sqrt(c), a, t / c)) / c
        assert lhs == pytest.approx(rhs, abs=1e-8)


def test_psi_tilde():
    req = PsiRequest(0.98382, 0.5, 1.0)
    assert psi_tilde(req) == psi(req)
    req = PsiRequest(0.98382, 0.5, 0.25)
    assert psi_tilde(req) == pytest.approx(0.5 * psi(req), rel=1e-15)
    rng = np.random.default_rng(2)
    for _ in range(5):
        req = PsiRequest(rng.uniform(0.5, 1.5), rng.uniform(0.2, 1.8), rng.uniform(0.2, 3))
        assert psi_tilde(req) / psi(req) == pytest.approx(req.theta2 ** req.alpha, rel=1e-14)


def test_halving_tolerance_is_stable():
    for r, a, t in [(0.98382, 0.5, 0.2), (0.5, 1.5, 2.0), (1.5, 1.0, 0.5)]:
        req = PsiRequest(r, a, t, abs_tol=1e-8)
        fine = PsiRequest(r, a, t, abs_tol=5e-9)
        assert abs(psi(req) - psi(fine)) < req.abs_tol


def test_tail_cutoff_is_sound():
    for c, a in [(2.2, 0.5), (0.7, 1.5), (3.4, 1.0)]:
        tol = 1e-12
        X = _tail_cutoff(a, tol)
        f = lambda x: np.exp(-x * x) * x ** (-1.0 - 2 * a) * bracket(c * x)
        beyond, _ = integrate(f, X, X + 10.0, abs_tol=1e-18, rel_tol=1e-12, initial_panels=20)
        assert abs(beyond) < tol
        assert abs(_gauss_part(c, a, 1e-13, 1e-12) - _gauss_part(c, a, 1e-15, 1e-13)) < 1e-12


def test_mellin_constant_against_direct_integral():
    mp.mp.dps = 20
    a = mp.mpf("0.5")
    B = lambda u: mp.besselj(0, mp.sqrt(2) * u) - 2 * mp.besselj(0, u) + 1
    head = mp.quad(lambda u: u ** (-1 - 2 * a) * B(u), [0, 1])
    flat = mp.quad(lambda u: u ** (-1 - 2 * a), [1, mp.inf])
    osc1 = mp.quadosc(lambda u: u ** (-1 - 2 * a) * mp.besselj(0, mp.sqrt(2) * u), [1, mp.inf],
                      zeros=lambda n: mp.besseljzero(0, n) / mp.sqrt(2))
    osc2 = mp.quadosc(lambda u: u ** (-1 - 2 * a) * mp.besselj(0, u), [1, mp.inf],
                      zeros=lambda n: mp.besseljzero(0, n))
    assert mellin_constant(0.5) == pytest.approx(float(head + flat + osc1 - 2 * osc2), rel=1e-10)
    # continuous through alpha = 1
    assert mellin_constant(1.0) == pytest.approx(mellin_constant(1.0 + 1e-9), rel=1e-7)


def test_psi_matches_reduced_form():
    # psi = (2 / (theta2 pi)) c^{2a} * reduced(1 / c^2)
    for r, a, t in [(0.98382, 0.5, 0.2), (0.5, 1.5, 2.0), (1.5, 1.0, 0.5)]:
        c = r / math.sqrt(t)
        via_reduced = 2 / (t * math.pi) * c ** (2 * a) * psi_reduced(1 / c ** 2, a)
        assert psi(PsiRequest(r, a, t)) == pytest.approx(via_reduced, rel=1e-9)


def test_psi_derivative_matches_oracle_difference():
    # compare against a wider centred difference of the direct evaluation
    req = PsiRequest(0.98382, 0.5, 0.5)
    h = 1e-3
    wide = (psi(PsiRequest(0.98382, 0.5, 0.5 + h)) - psi(PsiRequest(0.98382, 0.5, 0.5 - h))) / (2 * h)
    assert psi_derivative(req) == pytest.approx(wide, rel=1e-5)
    assert psi_derivative(req) < 0


def test_ratio_profile_equals_reduced_form():
    r = 0.98382
    for a in (0.5, 1.0, 1.5):
        grid = [0.3, 1.0, 4.0]
        ratios = psi_ratio_profile(r, a, grid)
        for t, q in zip(grid, ratios):
            reduced = 2 ** a * psi_reduced(t / r ** 2, a) / psi_reduced(2 * t / r ** 2, a)
            assert q == pytest.approx(reduced, rel=1e-9)
            assert q > 0


def test_ratio_profile_rejects_points_below_bound():
    with pytest.raises(ValidationError):
        psi_ratio_profile(0.98382, 0.5, [0.05])


def test_request_validation():
    with pytest.raises(ValidationError):
        PsiRequest(0.0, 0.5, 0.2)
    with pytest.raises(ValidationError):
        PsiRequest(1.0, 2.0, 0.2)
    with pytest.raises(ValidationError):
        PsiRequest(1.0, 0.5, -0.2)


def test_interpolator_accuracy():
    lo = theta2_lower_bound(0.98382, 0.5) + 1e-3
    ip = PsiInterpolator(0.98382, 0.5, lo, 5.0)
    assert ip.max_rel_error < 1e-9
    rng = np.random.default_rng(5)
    for t in rng.uniform(lo, 5.0, 12):
        assert ip(t) == pytest.approx(psi(PsiRequest(0.98382, 0.5, t)), rel=2e-9)
    with pytest.raises(ValidationError):
        ip(6.0)
