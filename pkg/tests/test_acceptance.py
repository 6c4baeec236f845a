"""Acceptance suite: one pass/fail test per acceptance criterion.

Criteria 6 and 7 share the session-scoped Monte Carlo studies from
``conftest.py``; criterion 3 runs its own 10^4-replication oracle comparison.
Criterion 9 is a multi-day reproduction and only runs when
``SPDE2D_PAPER_SCALE=1`` is set.
"""
import math
import os
import time

import numpy as np
import pytest

from oracles.psi_values import PSI_ORACLE
from spde2d.adaptive import (
    adaptive_estimators_q1, adaptive_estimators_q2, covariance_j, covariance_k, covariance_l,
)
from spde2d.cli import main
from spde2d.config import load_config
from spde2d.harness import run_montecarlo
from spde2d.mce import ContrastParams, MceResult, default_search_space, minimize_contrast, model_surface
from spde2d.model import (
    PAPER_TRUTH, PI2, ModelParams, ThinnedSpatialGrid, NoiseSpec, derive_constants, eigenvalue,
    theta2_lower_bound,
)
from spde2d.moments import f_series_untruncated
from spde2d.oracle_check import compare, default_setup, simulate_increments
from spde2d.specfun import PsiRequest, psi, psi_ratio_profile

TRUTH = ModelParams(**PAPER_TRUTH)
R_REF = 0.98382
WORKERS = min(8, os.cpu_count() or 1)
COMPONENTS = ("theta1", "eta1", "theta2", "sigma_sq")
TRUE_NU = {"theta1": 0.2, "eta1": 0.2, "theta2": 0.2, "sigma_sq": 1.0}


def test_1_special_functions():
    t0 = time.perf_counter()
    assert theta2_lower_bound(R_REF, 0.5) == pytest.approx(0.07267, abs=1e-5)
    assert len(PSI_ORACLE) == 27
    for r, a, t, ref in PSI_ORACLE:
        assert psi(PsiRequest(r, a, t)) == pytest.approx(ref, rel=0, abs=1e-8)
    assert time.perf_counter() - t0 < 1.0


def test_2_eigen_system():
    l11, l12 = eigenvalue(TRUTH, 1, 1), eigenvalue(TRUTH, 1, 2)
    assert l11 == pytest.approx(4.0478, abs=1e-4)
    assert l12 - l11 == pytest.approx(3 * PI2 * TRUTH.theta2, rel=4 * np.finfo(float).eps)


def test_3_oracle_equivalence():
    setup = default_setup()
    assert (setup.N, setup.M, setup.K, setup.m1) == (64, 32, 128, 8)
    t0 = time.perf_counter()
    T = simulate_increments(setup, 10_000, seed=7, workers=WORKERS)
    lines = compare(setup, T)
    elapsed = time.perf_counter() - t0
    moments = [ln for ln in lines if ln.label.startswith("E[")]
    covs = [ln for ln in lines if ln.label.startswith("Cov")]
    assert len(moments) == 9 and len(covs) == 9
    bad = [(ln.label, round(ln.z, 2)) for ln in lines if not ln.ok]
    assert not bad
    assert elapsed < 600.0, f"{elapsed:.0f} s with {WORKERS} worker(s)"


def _normalised_f(N, m1, j):
    # b chosen so that r = (1 - 2b) sqrt(N) / m1 stays at 0.98382
    b = (1 - R_REF * m1 / math.sqrt(N)) / 2
    sg = ThinnedSpatialGrid(b, m1, m1, N)
    d = 1.0 / N
    F = f_series_untruncated(j, j, None, None, None, TRUTH, NoiseSpec("Q1", 0.5), d, sg)
    return F / d ** 0.5 * math.exp(sg.y_mid[j - 1] + sg.z_mid[j - 1])


def test_4_leading_term_convergence():
    # untruncated series (K = L = infinity), so truncation matches on both sides
    ps = psi(PsiRequest(R_REF, 0.5, TRUTH.theta2))
    for coarse_j, fine_j in ((15, 47), (1, 1)):  # centre cell and boundary cell
        dev_coarse = abs(_normalised_f(1000, 30, coarse_j) / ps - 1)
        dev_fine = abs(_normalised_f(10_000, 95, fine_j) / ps - 1)
        assert dev_fine * 3 <= dev_coarse, (coarse_j, dev_coarse, dev_fine)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_5_ratio_profile_is_monotone(alpha):
    lb = theta2_lower_bound(R_REF, alpha)
    grid = np.geomspace(lb + 0.01, 10.0, 50)
    prof = np.array(psi_ratio_profile(R_REF, alpha, grid))
    d = np.diff(prof)
    assert d.size == 49
    assert np.all(d > 0) or np.all(d < 0)


def test_6_contrast_estimator_recovery(desk_study, doubled_study):
    # manufactured exact statistics
    cfg = desk_study["config"]
    nu0 = ContrastParams(1.0, 1.0, 0.2, 1.0)
    exact = model_surface(nu0, cfg.sgrid.y_mid, cfg.sgrid.z_mid, cfg.r, 0.5)
    res = minimize_contrast(exact, default_search_space(cfg.r, 0.5), cfg.r, 0.5)
    assert np.max(np.abs(res.nu_hat.as_array() - nu0.as_array())) < 1e-5

    # desk profile: N = 512, m = 24^2, first R = 100 replications
    assert (cfg.grid.N, cfg.sgrid.m1, cfg.sgrid.m2) == (512, 24, 24)
    desk = desk_study["results"][:100]
    dbl = doubled_study["results"][:100]
    dcfg = doubled_study["config"]
    assert (dcfg.grid.N, dcfg.sgrid.m1) == (2 * cfg.grid.N, 2 * cfg.sgrid.m1)

    def column(results, k):
        return np.array([r.values[f"mce.{k}"] for r in results if f"mce.{k}" in r.values])

    for k in COMPONENTS:
        v = column(desk, k)
        assert v.size == 100
        assert abs(v.mean() - TRUE_NU[k]) < 0.05, (k, v.mean())
        sd, sd2 = v.std(ddof=1), column(dbl, k).std(ddof=1)
        assert sd2 <= 0.75 * sd, (k, sd, sd2)

    runtime = desk_study["wall_time"] * 100 / len(desk_study["results"]) + doubled_study["wall_time"]
    assert runtime < 1800.0, f"{runtime:.0f} s"


def _fs(kappa, eta, theta2, sigma_sq):
    return MceResult(ContrastParams(kappa, eta, theta2, sigma_sq), kappa * theta2, eta * theta2, 0.0, 0, 1, True)


def test_7_adaptive_recovery(desk_study):
    a = 0.5
    c = derive_constants(TRUTH)
    fs = _fs(c.kappa, c.eta, TRUTH.theta2, TRUTH.sigma ** 2)
    l11, l12 = eigenvalue(TRUTH, 1, 1), eigenvalue(TRUTH, 1, 2)
    q1 = adaptive_estimators_q1(l11 ** -a, l12 ** -a, fs, a).estimates
    for k, v in (("theta0", 0.0), ("theta1", 0.2), ("eta1", 0.2), ("theta2", 0.2), ("sigma_sq", 1.0)):
        assert q1[k] == pytest.approx(v, abs=1e-12)
    mu0 = 3.0
    s11, s12 = (2 * PI2 + mu0) ** -a, (5 * PI2 + mu0) ** -a
    for known in (mu0, None):
        e = adaptive_estimators_q2(s11, s12, fs, a, mu0=known).estimates
        for k in COMPONENTS:
            assert e[k] == pytest.approx(TRUE_NU[k], abs=1e-12)
        if known is None:
            assert e["mu0"] == pytest.approx(mu0, abs=1e-10)

    v = (0.2, 0.2, 0.2, 1.0)
    mats = [covariance_j(l11, l12, *v, a), covariance_k(*v), covariance_l(2 * PI2, 5 * PI2, *v, a)]
    for M in mats:
        assert np.array_equal(M, M.T)
        w = np.linalg.eigvalsh(M)
        assert w.min() >= -1e-10 * w.max()
    w = np.sort(np.linalg.eigvalsh(mats[1]))
    assert w[-2] <= 1e-10 * w[-1]

    z = np.array([r.values["adaptive.theta2_studentized"] for r in desk_study["results"]
                  if "adaptive.theta2_studentized" in r.values])
    assert z.size == 200
    assert -0.5 < z.mean() < 0.5, z.mean()
    assert 0.3 < z.var(ddof=1) < 3.0, z.var(ddof=1)


TINY = """
[model]
theta0 = 0
theta1 = 0.2
eta1 = 0.2
theta2 = 0.2
sigma = 1
[noise]
noise_kind = Q1
alpha = 0.5
[grid]
N = 32
M1 = 16
M2 = 16
[thinning]
m1 = 6
n = 16
[simulation]
K = 64
L = 64
[experiment]
table_id = determinism
R = 16
base_seed = 99
estimators = mce, adaptive
mce_starts = 2
"""


def test_8_thread_count_does_not_change_output(tmp_path, capsys):
    cfg = tmp_path / "det.cfg"
    cfg.write_text(TINY)
    for threads in (1, 8):
        assert main(["montecarlo", "--config", str(cfg), "--threads", str(threads),
                     "--out", str(tmp_path / f"t{threads}")]) == 0
    one = (tmp_path / "t1" / "determinism.csv").read_bytes()
    eight = (tmp_path / "t8" / "determinism.csv").read_bytes()
    assert one == eight and len(one.splitlines()) == 2 + 10


@pytest.mark.skipif(os.environ.get("SPDE2D_PAPER_SCALE") != "1",
                    reason="paper-scale reproduction takes days; set SPDE2D_PAPER_SCALE=1 to run")
def test_9_paper_scale_reproduction():
    cfg = load_config("table1-paper")
    table = run_montecarlo(cfg, threads=os.cpu_count())
    for k, target in zip(COMPONENTS, (0.197, 0.197, 0.197, 1.000)):
        row = table.row(f"mce.{k}")
        assert abs(row.mean - target) < 3 * row.sd, (k, row.mean, row.sd)
