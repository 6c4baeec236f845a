"""Monte Carlo replication engine and summary tables.

Each replication draws its simulation seed from ``SeedSequence(base_seed,
spawn_key=(rep,))``, so results do not depend on which worker runs it or in
what order.  Aggregation is ordered by replication index.
"""
from __future__ import annotations

import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional

import numpy as np

from .adaptive import (
    PreconditionError, adaptive_estimators_q1, adaptive_estimators_q2,
    approximate_coordinate, rate_condition, sigma_hat_sq,
)
from .config import ExperimentConfig
from .increments import snapped_coordinates, squared_stats, triple_increments
from .mce import MceOptions, minimize_contrast
from .model import PI2, NoiseKind, eigenvalue
from .simulate import grid_points, simulate_views, tensor_points

log = logging.getLogger(__name__)

CSV_COLUMNS = ("table_id", "estimator", "true_value", "mean", "sd", "bias", "rmse",
               "r_effective", "failures")


def replication_seed(base_seed: int, rep: int) -> int:
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(rep),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ReplicationResult:
    rep: int
    seed: int
    values: Dict[str, float] = field(default_factory=dict)
    failures: Dict[str, str] = field(default_factory=dict)  # estimator group -> message
    diagnostics: Dict[str, object] = field(default_factory=dict)
    wall_time: float = 0.0
    stats: Optional[object] = None  # SquaredIncrementStats when requested; not serialised


def true_values(cfg: ExperimentConfig) -> Dict[str, float]:
    p = cfg.params
    out = {"mce.theta1": p.theta1, "mce.eta1": p.eta1, "mce.theta2": p.theta2,
           "mce.sigma_sq": p.sigma ** 2}
    if "adaptive" in cfg.estimators:
        if cfg.noise.kind is NoiseKind.Q1:
            out["adaptive.theta0"] = p.theta0
        elif not cfg.noise.mu0_known:
            out["adaptive.mu0"] = cfg.noise.mu0
        out.update({"adaptive.theta1": p.theta1, "adaptive.eta1": p.eta1,
                    "adaptive.theta2": p.theta2, "adaptive.sigma_sq": p.sigma ** 2})
        if cfg.noise.kind is NoiseKind.Q1:
            out["adaptive.theta2_studentized"] = 0.0
    return out


def studentizing_scale(cfg: ExperimentConfig) -> float:
    """``sqrt`` of the theta2 diagonal entry of the Q1 covariance at the truth."""
    lam11 = eigenvalue(cfg.params, 1, 1)
    lam12 = eigenvalue(cfg.params, 1, 2)
    a = cfg.noise.alpha
    return math.sqrt(2.0 * (lam11 ** 2 + lam12 ** 2) / (9.0 * PI2 ** 2 * a ** 2))


def run_replication(cfg: ExperimentConfig, rep: int, keep_stats: bool = False) -> ReplicationResult:
    seed = replication_seed(cfg.base_seed, rep)
    res = ReplicationResult(rep, seed)
    t0 = time.perf_counter()
    try:
        _run(cfg, res, keep_stats)
    except Exception as e:  # never abort the batch
        res.failures.setdefault("simulation", f"{type(e).__name__}: {e}")
        log.warning("replication %d (seed %d) failed: %s", rep, seed, e)
        log.debug("%s", traceback.format_exc())
    res.wall_time = time.perf_counter() - t0
    return res


def _run(cfg: ExperimentConfig, res: ReplicationResult, keep_stats: bool = False) -> None:
    sim = cfg.simulation(res.seed)
    if cfg.snap_to_grid:
        ys, zs = snapped_coordinates(cfg.sgrid, cfg.grid)
    else:
        ys, zs = cfg.sgrid.ys, cfg.sgrid.zs
    views = [(tensor_points(ys, zs), None)]
    adaptive = "adaptive" in cfg.estimators
    if adaptive:
        views.append((grid_points(cfg.grid), cfg.tgrid.indices))
    samples = simulate_views(sim, views)

    inc = triple_increments(samples[0], cfg.sgrid, ys, zs)
    stats = squared_stats(inc, cfg.noise.alpha, cfg.grid.delta)
    if keep_stats:
        res.stats = stats
    r = cfg.r if not cfg.snap_to_grid else (ys[1] - ys[0]) * math.sqrt(cfg.grid.N)
    try:
        m = minimize_contrast(stats, cfg.search_space(), r, cfg.noise.alpha, cfg.noise.kind,
                              MceOptions(n_starts=cfg.mce_starts))
    except Exception as e:
        res.failures["mce"] = f"{type(e).__name__}: {e}"
        res.failures["adaptive"] = "first stage failed"
        return
    res.diagnostics["mce"] = m.as_dict()
    if not m.converged:
        res.failures["mce"] = "optimizer did not converge"
    else:
        res.values.update({"mce.theta1": m.theta1_hat, "mce.eta1": m.eta1_hat,
                           "mce.theta2": m.nu_hat.theta2, "mce.sigma_sq": m.nu_hat.sigma_sq})
    if not adaptive:
        return
    try:
        qv = {}
        for mode in ((1, 1), (1, 2)):
            c = approximate_coordinate(samples[1], cfg.grid, cfg.tgrid, mode, m.nu_hat.kappa, m.nu_hat.eta)
            qv[mode] = sigma_hat_sq(c)
        n = cfg.n
        if cfg.noise.kind is NoiseKind.Q1:
            rep = adaptive_estimators_q1(qv[1, 1], qv[1, 2], m, cfg.noise.alpha, n=n)
        else:
            mu0 = cfg.noise.mu0 if cfg.noise.mu0_known else None
            rep = adaptive_estimators_q2(qv[1, 1], qv[1, 2], m, cfg.noise.alpha, mu0=mu0, n=n)
    except (PreconditionError, ValueError, FloatingPointError) as e:
        res.failures["adaptive"] = f"{type(e).__name__}: {e}"
        return
    res.diagnostics["adaptive"] = {"sigma_hat_sq": rep.sigma_hat_sq, "lambda_check": rep.lambda_check}
    for k, v in rep.estimates.items():
        res.values[f"adaptive.{k}"] = v
    if cfg.noise.kind is NoiseKind.Q1:
        res.values["adaptive.theta2_studentized"] = (
            math.sqrt(n) * (rep.estimates["theta2"] - cfg.params.theta2) / studentizing_scale(cfg))


# ------------------------------------------------------------------ aggregation


@dataclass
class SummaryRow:
    table_id: str
    estimator: str
    true_value: float
    mean: float
    sd: float
    bias: float
    rmse: float
    r_effective: int
    failures: int


@dataclass
class SummaryTable:
    rows: List[SummaryRow]
    config_hash: str
    report: dict = field(default_factory=dict)

    def row(self, estimator: str) -> SummaryRow:
        for r in self.rows:
            if r.estimator == estimator:
                return r
        raise KeyError(estimator)

    def to_csv(self) -> str:
        lines = [f"# config_hash={self.config_hash}", ",".join(CSV_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(repr(float(getattr(r, c))) if isinstance(getattr(r, c), float)
                                  else str(getattr(r, c)) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"


def summarize(cfg: ExperimentConfig, results: List[ReplicationResult]) -> SummaryTable:
    truth = true_values(cfg)
    rows = []
    for name, tv in truth.items():
        group = name.split(".")[0]
        vals = np.array([r.values[name] for r in results if name in r.values], dtype=float)
        fails = sum(1 for r in results if name not in r.values)
        if vals.size:
            mean = float(np.mean(vals))
            sd = float(np.std(vals, ddof=1)) if vals.size > 1 else float("nan")
            bias = mean - tv
            rmse = float(np.sqrt(np.mean((vals - tv) ** 2)))
        else:
            mean = sd = bias = rmse = float("nan")
        rows.append(SummaryRow(cfg.table_id, name, float(tv), mean, sd, bias, rmse, int(vals.size), fails))
    return SummaryTable(rows, cfg.config_hash())


def run_montecarlo(cfg: ExperimentConfig, threads: Optional[int] = None) -> SummaryTable:
    """Run ``cfg.R`` replications and aggregate them in replication order."""
    threads = cfg.threads if threads is None else threads
    t0 = time.perf_counter()
    job = partial(run_replication, cfg)
    if threads <= 1:
        results = [job(i) for i in range(cfg.R)]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(job, range(cfg.R)))
    results.sort(key=lambda r: r.rep)
    wall = time.perf_counter() - t0
    table = summarize(cfg, results)
    failed = [{"rep": r.rep, "seed": r.seed, "failures": r.failures} for r in results if r.failures]
    for f in failed:
        log.info("replication %d failed (seed %d): %s", f["rep"], f["seed"], f["failures"])
    report = {
        "config": cfg.as_dict(),
        "config_hash": cfg.config_hash(),
        "r": cfg.r,
        "threads": threads,
        "wall_time_total": wall,
        "wall_time_per_replication": [r.wall_time for r in results],
        "summary": [r.__dict__ for r in table.rows],
        "failed_replications": failed,
        "replications": [{"rep": r.rep, "seed": r.seed, "values": r.values,
                          "diagnostics": r.diagnostics} for r in results],
    }
    if "adaptive" in cfg.estimators:
        report["rate_condition"] = rate_condition(cfg.n, cfg.grid.M1, cfg.grid.M2, cfg.noise.alpha, cfg.tau)
    table.report = report
    return table


def write_outputs(table: SummaryTable, out_dir: str, stem: str = "summary") -> Dict[str, str]:
    import os
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    json_path = os.path.join(out_dir, f"{stem}.json")
    with open(csv_path, "w") as fh:
        fh.write(table.to_csv())
    with open(json_path, "w") as fh:
        json.dump(table.report, fh, indent=1, sort_keys=True, default=_json_default)
    return {"csv": csv_path, "json": json_path}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
