import math

import numpy as np
import pytest

from spde2d.increments import (
    TripleIncrementTensor, spatial_double_difference, squared_stats, triple_increments,
)
from spde2d.model import (
    PAPER_TRUTH, ModelParams, NoiseSpec, ObservationGrid, ThinnedSpatialGrid, ValidationError,
)
from spde2d.moments import MomentOracle, SeriesTruncation
from spde2d.oracle_check import OracleSetup, simulate_increments
from spde2d.simulate import FieldSample, tensor_points
from spde2d.specfun import PsiRequest, psi

SG = ThinnedSpatialGrid(0.1, 3, 3, 16)


def sample_from(fn, sg=SG, N=16):
    t = np.arange(N + 1) / N
    pts = tensor_points(sg.ys, sg.zs)
    vals = np.array([[fn(ti, y, z) for y, z in pts] for ti in t])
    return FieldSample(t, pts, vals)


def test_multiplicative_field():
    T = triple_increments(sample_from(lambda t, y, z: t * y * z), SG)
    assert T.values.shape == (16, 3, 3)
    assert np.allclose(T.values, SG.delta ** 2 / 16, rtol=1e-12)


def test_fields_without_full_dependence_vanish():
    for fn in (lambda t, y, z: math.sin(3 * t) * y ** 2,
               lambda t, y, z: math.cos(t) * (y + z ** 3),
               lambda t, y, z: y * z):
        T = triple_increments(sample_from(fn), SG)
        assert np.max(np.abs(T.values)) < 1e-15


def test_difference_order_commutes_exactly():
    rng = np.random.default_rng(0)
    v = rng.integers(-1000, 1000, size=(9, 5, 6)).astype(float)  # exact in floating point
    a = spatial_double_difference(np.diff(v, axis=0))
    b = np.diff(spatial_double_difference(v), axis=0)
    assert np.array_equal(a, b)


def test_linearity_and_overlap_identity():
    rng = np.random.default_rng(1)
    t = np.arange(17) / 16
    pts = tensor_points(SG.ys, SG.zs)
    X = FieldSample(t, pts, rng.normal(size=(17, 16)))
    Y = FieldSample(t, pts, rng.normal(size=(17, 16)))
    Z = FieldSample(t, pts, 2.0 * X.values - 0.5 * Y.values)
    tx, ty, tz = (triple_increments(s, SG) for s in (X, Y, Z))
    assert np.allclose(tz.values, 2.0 * tx.values - 0.5 * ty.values, rtol=0, atol=1e-14)
    assert np.array_equal(tx.tilde, tx.values[:-1] + tx.values[1:])


def test_missing_point_is_named():
    pts = tensor_points(SG.ys, SG.zs)[:-1]
    s = FieldSample(np.arange(3) / 2, pts, np.zeros((3, len(pts))))
    with pytest.raises(ValidationError, match="is not in the sample"):
        triple_increments(s, SG)


def test_squared_stats_examples(tmp_path):
    ym = np.array([0.3, 0.7])
    zero = TripleIncrementTensor(np.zeros((4, 2, 2)), 0.25, ym, ym)
    st = squared_stats(zero, 1.0, 0.25)
    assert np.all(st.A == 0) and np.all(st.A_tilde == 0)
    ones = TripleIncrementTensor(np.ones((4, 2, 2)), 0.25, ym, ym)
    st = squared_stats(ones, 1.0, 0.25)
    assert np.allclose(st.A, 4.0, rtol=1e-15)
    # three overlapping sums of 2, each squared to 4, over N (2 Delta)^alpha = 2
    assert np.allclose(st.A_tilde, 6.0, rtol=1e-15)
    with pytest.raises(ValidationError):
        squared_stats(ones, 2.0, 0.25)
    st.to_csv(tmp_path / "st.csv")
    rows = (tmp_path / "st.csv").read_text().splitlines()
    assert rows[0] == "j,k,y_mid,z_mid,A,A_tilde" and rows[1] == "1,1,0.3,0.3,4.0,6.0"


# ------------------------------------------------------------------ simulated data

INTERIOR = OracleSetup(ModelParams(**PAPER_TRUTH), NoiseSpec("Q1", 0.5), N=64, M=16, K=256, m1=4, b=0.3)
REPS = 300


@pytest.fixture(scope="module")
def interior_increments():
    return simulate_increments(INTERIOR, REPS, seed=101)


def test_normalised_stats_track_psi(interior_increments):
    s = INTERIOR
    sg = s.sgrid
    weight = np.exp(np.add.outer(sg.y_mid, sg.z_mid))  # e^{kappa y + eta z} with kappa = eta = 1
    per_rep = (interior_increments ** 2).mean(axis=1) / (1 / s.N) ** 0.5
    cell_mean = (per_rep * weight).mean(axis=(1, 2)) / s.params.sigma ** 2
    mc, se = cell_mean.mean(), cell_mean.std(ddof=1) / math.sqrt(REPS)
    exact = MomentOracle(s.params, s.noise, 1 / s.N, sg, SeriesTruncation(s.K, s.K)).expected_stats(s.N, 0.5)
    target = float((exact.A * weight).mean())
    assert abs(mc - target) < 3 * se
    # the truncated expectation sits below psi by the series tail; the Monte
    # Carlo mean must be within that bias plus sampling error of psi
    ps = psi(PsiRequest(sg.r, 0.5, s.params.theta2))
    assert abs(mc - ps) < abs(target - ps) + 3 * se
    assert abs(target / ps - 1) < 0.03


def test_covariance_decays_and_matches_oracle(interior_increments):
    s = INTERIOR
    T = interior_increments
    oracle = MomentOracle(s.params, s.noise, 1 / s.N, s.sgrid, SeriesTruncation(s.K, s.K))
    i, j, k = 20, 2, 3
    covs = []
    for lag in (1, 2, 4, 8):
        x = T[:, i - 1, j - 1, k - 1] * T[:, i - 1 + lag, j - 1, k - 1]
        exact = oracle.cov(i, i + lag, j, k, j, k)
        assert abs(x.mean() - exact) < 3 * x.std(ddof=1) / math.sqrt(REPS)
        covs.append(abs(exact))
    assert covs == sorted(covs, reverse=True)
