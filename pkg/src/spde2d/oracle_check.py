"""Monte Carlo moments of triple increments against the exact truncated series."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Tuple

import numpy as np

from .increments import triple_increments
from .model import ModelParams, NoiseSpec, ObservationGrid, PAPER_TRUTH, ThinnedSpatialGrid
from .moments import MomentOracle, SeriesTruncation
from .simulate import SimulationConfig, simulate_views, tensor_points

# (i, j, k) for second moments and (i, i', j, k, j', k') for covariances; 1-based
MOMENT_INDICES = [(1, 1, 1), (1, 4, 5), (2, 8, 8), (5, 3, 6), (16, 4, 4),
                  (32, 1, 8), (48, 6, 2), (63, 5, 5), (64, 8, 1)]
COV_INDICES = [(10, 11, 4, 4, 4, 4), (10, 12, 4, 4, 4, 4), (10, 18, 4, 4, 4, 4),
               (1, 2, 2, 2, 2, 2), (5, 5, 4, 4, 4, 5), (5, 5, 4, 4, 5, 5),
               (20, 21, 3, 3, 3, 4), (30, 31, 7, 7, 6, 6), (2, 3, 1, 1, 1, 1)]


@dataclass
class CheckLine:
    label: str
    exact: float
    mc_mean: float
    mc_se: float

    @property
    def z(self) -> float:
        return (self.mc_mean - self.exact) / self.mc_se

    @property
    def ok(self) -> bool:
        return abs(self.z) <= 3.0


@dataclass
class OracleSetup:
    params: ModelParams
    noise: NoiseSpec
    N: int = 64
    M: int = 32
    K: int = 128
    m1: int = 8
    b: float = 1.0 / 30.0

    @property
    def sgrid(self) -> ThinnedSpatialGrid:
        return ThinnedSpatialGrid(self.b, self.m1, self.m1, self.N)


def default_setup() -> OracleSetup:
    return OracleSetup(ModelParams(**PAPER_TRUTH), NoiseSpec("Q1", 0.5))


def _increments_chunk(setup: OracleSetup, seed: int, reps: range) -> np.ndarray:
    grid = ObservationGrid(setup.N, setup.M, setup.M)
    sg = setup.sgrid
    pts = tensor_points(sg.ys, sg.zs)
    out = np.empty((len(reps), setup.N, setup.m1, setup.m1))
    for n, r in enumerate(reps):
        s = int(np.random.SeedSequence(seed, spawn_key=(r,)).generate_state(1, np.uint64)[0])
        cfg = SimulationConfig(setup.params, setup.noise, grid, setup.K, setup.K, s)
        (sample,) = simulate_views(cfg, [(pts, None)])
        out[n] = triple_increments(sample, sg).values
    return out


def simulate_increments(setup: OracleSetup, reps: int, seed: int, workers: int = 1) -> np.ndarray:
    """Triple-increment tensors of ``reps`` independent replications, shape (reps, N, m1, m1).

    Replication ``r`` is seeded from ``SeedSequence(seed, spawn_key=(r,))``, so
    the result does not depend on ``workers``.
    """
    if workers <= 1 or reps < 2:
        return _increments_chunk(setup, seed, range(reps))
    bounds = np.linspace(0, reps, min(reps, 4 * workers) + 1).astype(int)
    chunks = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(partial(_increments_chunk, setup, seed), chunks))
    return np.concatenate(parts)


def compare(setup: OracleSetup, T: np.ndarray) -> List[CheckLine]:
    oracle = MomentOracle(setup.params, setup.noise, 1.0 / setup.N, setup.sgrid,
                          SeriesTruncation(setup.K, setup.K))
    R = T.shape[0]
    lines = []
    for (i, j, k) in MOMENT_INDICES:
        x = T[:, i - 1, j - 1, k - 1] ** 2
        lines.append(CheckLine(f"E[T^2] i={i} j={j} k={k}", oracle.second_moment(i, j, k),
                               float(x.mean()), float(x.std(ddof=1) / math.sqrt(R))))
    for (i, i2, j, k, j2, k2) in COV_INDICES:
        x = T[:, i - 1, j - 1, k - 1] * T[:, i2 - 1, j2 - 1, k2 - 1]
        lines.append(CheckLine(f"Cov i={i} i'={i2} j={j} k={k} j'={j2} k'={k2}",
                               oracle.cov(i, i2, j, k, j2, k2),
                               float(x.mean()), float(x.std(ddof=1) / math.sqrt(R))))
    return lines


def run_oracle_check(cfg=None, reps: int = 2000, seed: int = 7, workers: int = 1) -> Tuple[bool, str]:
    setup = default_setup()
    if cfg is not None:
        setup = OracleSetup(cfg.params, cfg.noise, N=cfg.grid.N, M=cfg.grid.M1,
                            K=cfg.K, m1=cfg.sgrid.m1, b=cfg.sgrid.b)
    lines = compare(setup, simulate_increments(setup, reps, seed, workers))
    text = ["check,exact,mc_mean,mc_se,z,status"]
    for ln in lines:
        text.append(f"{ln.label},{float(ln.exact)!r},{float(ln.mc_mean)!r},{float(ln.mc_se)!r},{ln.z:.3f},"
                    f"{'PASS' if ln.ok else 'FAIL'}")
    ok = all(ln.ok for ln in lines)
    text.append(f"overall,{'PASS' if ok else 'FAIL'}")
    return ok, "\n".join(text) + "\n"
