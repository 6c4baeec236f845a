"""Command-line entry point ``spde2d``.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from .config import ConfigError, load_config
from .model import ValidationError, theta2_lower_bound


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(s: str):
    return [float(v) for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spde2d", description="Simulation and estimation for a 2D linear parabolic SPDE.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="INI config file or shipped profile name")
        sp.add_argument("--seed", type=int, help="override the base seed")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", help="output path (file or directory)")

    s = sub.add_parser("simulate", help="simulate one field sample")
    common(s)
    s.add_argument("--csv", action="store_true", help="also write a long-format CSV")

    e = sub.add_parser("estimate", help="estimate from a stored field sample")
    common(e)
    e.add_argument("--sample", required=True)
    e.add_argument("--method", choices=("mce", "adaptive"), default="mce")

    m = sub.add_parser("montecarlo", help="run the replication study of a profile")
    common(m)
    m.add_argument("--reps", type=int, help="override the number of replications")

    q = sub.add_parser("psi", help="tabulate the scaling function")
    q.add_argument("--r", type=_floats, required=True, help="comma-separated values")
    q.add_argument("--alpha", type=_floats, required=True)
    q.add_argument("--theta2", type=_floats, required=True)
    q.add_argument("--out")

    o = sub.add_parser("oracle-check", help="Monte Carlo moments against the exact series")
    common(o, config_required=False)
    o.add_argument("--reps", type=int, default=2000)
    return p


def _write_text(path, text):
    if path:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_psi(args) -> int:
    from .specfun import PsiRequest, psi
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "alpha", "theta2", "psi", "psi_tilde", "lower_bound"])
    for r in args.r:
        for a in args.alpha:
            for t in args.theta2:
                v = psi(PsiRequest(r, a, t))
                w.writerow([repr(float(x)) for x in (r, a, t, v, t ** a * v, theta2_lower_bound(r, a))])
    _write_text(args.out, buf.getvalue())
    return 0


def _cfg(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(base_seed=args.seed)
    if getattr(args, "reps", None) is not None and args.command == "montecarlo":
        cfg = cfg.with_overrides(R=args.reps)
    return cfg


def cmd_simulate(args) -> int:
    from .harness import replication_seed
    from .simulate import grid_points, simulate_observations, tensor_points
    cfg = _cfg(args)
    sim = cfg.simulation(replication_seed(cfg.base_seed, 0))
    pts = tensor_points(cfg.sgrid.ys, cfg.sgrid.zs)
    sample = simulate_observations(sim, pts)
    out = args.out or "sample.fs"
    sample.save(out)
    if args.csv:
        sample.to_csv(os.path.splitext(out)[0] + ".csv")
    print(json.dumps({"out": out, "config_hash": sample.config_hash,
                      "n_times": sample.n_times, "n_points": len(sample.points)}))
    return 0


def cmd_estimate(args) -> int:
    from .adaptive import (adaptive_estimators_q1, adaptive_estimators_q2, approximate_coordinate,
                           rate_condition, sigma_hat_sq)
    from .increments import squared_stats, triple_increments
    from .mce import minimize_contrast, MceOptions
    from .model import NoiseKind
    from .simulate import FieldSample
    cfg = _cfg(args)
    sample = FieldSample.load(args.sample)
    stats = squared_stats(triple_increments(sample, cfg.sgrid), cfg.noise.alpha, cfg.grid.delta)
    m = minimize_contrast(stats, cfg.search_space(), cfg.r, cfg.noise.alpha, cfg.noise.kind,
                          MceOptions(n_starts=cfg.mce_starts))
    report = {"config_hash": cfg.config_hash(), "sample_hash": sample.config_hash, "mce": m.as_dict()}
    row = {"method": "mce", **{k: m.as_dict()[k] for k in ("theta1", "eta1", "theta2", "sigma_sq")}}
    if args.method == "adaptive":
        qv = [sigma_hat_sq(approximate_coordinate(sample, cfg.grid, cfg.tgrid, mode,
                                                  m.nu_hat.kappa, m.nu_hat.eta))
              for mode in ((1, 1), (1, 2))]
        if cfg.noise.kind is NoiseKind.Q1:
            ar = adaptive_estimators_q1(qv[0], qv[1], m, cfg.noise.alpha, n=cfg.n)
        else:
            ar = adaptive_estimators_q2(qv[0], qv[1], m, cfg.noise.alpha,
                                        cfg.noise.mu0 if cfg.noise.mu0_known else None, n=cfg.n)
        ar.rate_condition = rate_condition(cfg.n, cfg.grid.M1, cfg.grid.M2, cfg.noise.alpha, cfg.tau)
        report["adaptive"] = ar.as_dict()
        row = {"method": "adaptive", **ar.estimates}
    out = args.out or "estimate"
    with open(out + ".json", "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    with open(out + ".csv", "w") as fh:
        fh.write(",".join(row) + "\n")
        fh.write(",".join(v if isinstance(v, str) else repr(float(v)) for v in row.values()) + "\n")
    print(json.dumps(row))
    return 0


def cmd_montecarlo(args) -> int:
    from .harness import run_montecarlo, write_outputs
    cfg = _cfg(args)
    table = run_montecarlo(cfg, threads=args.threads)
    paths = write_outputs(table, args.out or "results", stem=cfg.table_id)
    sys.stdout.write(table.to_csv())
    print(json.dumps(paths))
    return 0


def cmd_oracle_check(args) -> int:
    from .oracle_check import run_oracle_check
    cfg = load_config(args.config) if args.config else None
    ok, text = run_oracle_check(cfg, reps=args.reps, seed=args.seed or 7, workers=args.threads)
    _write_text(args.out, text)
    return 0 if ok else 2


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "montecarlo": cmd_montecarlo,
            "psi": cmd_psi, "oracle-check": cmd_oracle_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValidationError) as e:
        print(f"spde2d: invalid input: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"spde2d: {args.command} failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
