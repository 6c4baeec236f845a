"""Shared Monte Carlo runs for the statistical tests.

The desk study (table1-desk with n = 256, 200 replications) and its doubled
counterpart (N = 1024, m1 = 48, 100 replications) are expensive, so each is
run once per session.  Setting ``SPDE2D_TEST_CACHE`` to a directory stores the
replication results there and reuses them on later runs with the same
configuration hash.
"""
import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial
import pickle
import time

import pytest

from spde2d.config import load_config
from spde2d.harness import run_replication

DESK_REPS = 200
DOUBLED_REPS = 100


def desk_config():
    # n = 256 thinned times for the adaptive stage; the contrast stage does not use n
    return load_config("table1-desk").with_overrides(n=256, R=DESK_REPS)


def doubled_config():
    from spde2d.model import ObservationGrid, ThinnedSpatialGrid
    base = load_config("table1-desk")
    return base.with_overrides(
        grid=ObservationGrid(1024, 64, 64),
        sgrid=ThinnedSpatialGrid(base.sgrid.b, 48, 48, 1024),
        n=64, R=DOUBLED_REPS, estimators=("mce",), table_id="table1-desk-doubled")


def _run(cfg):
    cache = os.environ.get("SPDE2D_TEST_CACHE")
    path = None
    if cache:
        os.makedirs(cache, exist_ok=True)
        path = os.path.join(cache, f"{cfg.table_id}-{cfg.config_hash()}.pkl")
        if os.path.exists(path):
            with open(path, "rb") as fh:
                return pickle.load(fh)
    t0 = time.perf_counter()
    workers = min(8, os.cpu_count() or 1)
    job = partial(run_replication, cfg, keep_stats=True)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, range(cfg.R)))
    else:
        results = [job(i) for i in range(cfg.R)]
    out = {"config": cfg, "results": results, "wall_time": time.perf_counter() - t0}
    if path:
        with open(path, "wb") as fh:
            pickle.dump(out, fh)
    return out


@pytest.fixture(scope="session")
def desk_study():
    return _run(desk_config())


@pytest.fixture(scope="session")
def doubled_study():
    return _run(doubled_config())
