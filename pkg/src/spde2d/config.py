"""Experiment configuration read from INI documents.

Example::

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
    N = 512
    M1 = 64
    M2 = 64

    [thinning]
    b = 0.0333333333333333
    m1 = 24
    m2 = 24
    n = 64

    [simulation]
    K = 256
    L = 256

    [experiment]
    table_id = table1-desk
    R = 100
    base_seed = 20240601
    estimators = mce

Keys are case sensitive (``N`` and ``n`` differ).
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional, Tuple

from .mce import SearchSpace, default_search_space
from .model import (
    ModelParams, NoiseKind, NoiseSpec, ObservationGrid, ThinnedSpatialGrid,
    ThinnedTemporalGrid, ValidationError,
)
from .simulate import SimulationConfig


class ConfigError(ValidationError):
    """Malformed or inconsistent configuration document."""


ESTIMATORS = ("mce", "adaptive")


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    noise: NoiseSpec
    grid: ObservationGrid
    sgrid: ThinnedSpatialGrid
    n: int
    K: int = 256
    L: int = 256
    R: int = 100
    base_seed: int = 0
    estimators: Tuple[str, ...] = ("mce",)
    table_id: str = "custom"
    snap_to_grid: bool = False
    tau: float = 0.49
    search: Optional[SearchSpace] = None
    mce_starts: int = 8
    threads: int = 1
    source: str = ""

    def __post_init__(self):
        if self.sgrid.N != self.grid.N:
            raise ConfigError("thinned grid and observation grid disagree on N")
        if self.R < 1:
            raise ConfigError("R must be at least 1")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {e!r}; choose from {ESTIMATORS}")
        ThinnedTemporalGrid(self.n, self.grid.N)

    @property
    def tgrid(self) -> ThinnedTemporalGrid:
        return ThinnedTemporalGrid(self.n, self.grid.N)

    @property
    def r(self) -> float:
        return self.sgrid.r

    def search_space(self) -> SearchSpace:
        return self.search or default_search_space(self.r, self.noise.alpha)

    def simulation(self, seed: int) -> SimulationConfig:
        return SimulationConfig(self.params, self.noise, self.grid, self.K, self.L, seed)

    def as_dict(self) -> dict:
        p = self.params
        d = {
            "model": dict(theta0=p.theta0, theta1=p.theta1, eta1=p.eta1, theta2=p.theta2, sigma=p.sigma),
            "noise": dict(noise_kind=self.noise.kind.value, alpha=self.noise.alpha,
                          mu0=self.noise.mu0, mu0_known=self.noise.mu0_known),
            "grid": dict(N=self.grid.N, M1=self.grid.M1, M2=self.grid.M2),
            "thinning": dict(b=self.sgrid.b, m1=self.sgrid.m1, m2=self.sgrid.m2, n=self.n,
                             snap_to_grid=self.snap_to_grid),
            "simulation": dict(K=self.K, L=self.L),
            "experiment": dict(table_id=self.table_id, R=self.R, base_seed=self.base_seed,
                               estimators=list(self.estimators), tau=self.tau,
                               mce_starts=self.mce_starts),
        }
        if self.search is not None:
            d["search"] = dict(lower=list(self.search.lower), upper=list(self.search.upper))
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


# ------------------------------------------------------------------ parsing


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep N and n distinct
    return cp


def _get(cp, section, key, conv, default=None, required=True):
    if not cp.has_option(section, key):
        if required and default is None:
            raise ConfigError(f"missing field [{section}] {key}")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"field [{section}] {key} = {raw!r}: {e}") from None


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError("expected an integer")
    return int(v)


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _opt_float(s):
    return None if s.strip().lower() in ("", "none") else float(s)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = _parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    known = {"model", "noise", "grid", "thinning", "simulation", "experiment", "search"}
    for s in cp.sections():
        if s not in known:
            raise ConfigError(f"unknown section [{s}] in {source}")
    try:
        params = ModelParams(**{k: _get(cp, "model", k, float)
                                for k in ("theta0", "theta1", "eta1", "theta2", "sigma")})
        kind = _get(cp, "noise", "noise_kind", str, "Q1")
        mu0 = _get(cp, "noise", "mu0", _opt_float, required=False)
        noise = NoiseSpec(NoiseKind(kind.strip()), _get(cp, "noise", "alpha", float), mu0,
                          _get(cp, "noise", "mu0_known", _bool, True))
        N = _get(cp, "grid", "N", _int)
        grid = ObservationGrid(N, _get(cp, "grid", "M1", _int), _get(cp, "grid", "M2", _int))
        m1 = _get(cp, "thinning", "m1", _int)
        m2 = _get(cp, "thinning", "m2", _int, m1)
        b = _get(cp, "thinning", "b", float, 1.0 / 30.0)
        sgrid = ThinnedSpatialGrid(b, m1, m2, N)
        search = None
        if cp.has_section("search"):
            names = ("kappa", "eta", "theta2", "sigma_sq")
            lo = tuple(_get(cp, "search", f"{k}_lo", float) for k in names)
            hi = tuple(_get(cp, "search", f"{k}_hi", float) for k in names)
            search = SearchSpace(lo, hi)
        est = _get(cp, "experiment", "estimators", str, "mce")
        cfg = ExperimentConfig(
            params=params, noise=noise, grid=grid, sgrid=sgrid,
            n=_get(cp, "thinning", "n", _int, N),
            K=_get(cp, "simulation", "K", _int, 256), L=_get(cp, "simulation", "L", _int, 256),
            R=_get(cp, "experiment", "R", _int, 1),
            base_seed=_get(cp, "experiment", "base_seed", _int, 0),
            estimators=tuple(e.strip() for e in est.split(",") if e.strip()),
            table_id=_get(cp, "experiment", "table_id", str, "custom"),
            snap_to_grid=_get(cp, "thinning", "snap_to_grid", _bool, False),
            tau=_get(cp, "experiment", "tau", float, 0.49),
            search=search,
            mce_starts=_get(cp, "experiment", "mce_starts", _int, 8),
            source=source,
        )
    except ConfigError:
        raise
    except ValidationError as e:
        raise ConfigError(f"{source}: {e}") from None
    if search is not None:
        search.check_for(cfg.r, noise.alpha)
    if "adaptive" in cfg.estimators and "mce" not in cfg.estimators:
        cfg = cfg.with_overrides(estimators=("mce",) + cfg.estimators)
    return cfg


def profile_names():
    return sorted(p.name[:-4] for p in resources.files("spde2d.profiles").iterdir()
                  if p.name.endswith(".cfg"))


def load_config(path_or_profile: str) -> ExperimentConfig:
    """Read a config file, or a shipped profile by name (e.g. ``table1-desk``)."""
    if os.path.exists(path_or_profile):
        with open(path_or_profile) as fh:
            return parse_config(fh.read(), source=str(path_or_profile))
    name = os.path.basename(path_or_profile)
    name = name[:-4] if name.endswith(".cfg") else name
    res = resources.files("spde2d.profiles").joinpath(name + ".cfg")
    if not res.is_file():
        raise ConfigError(f"no config file or shipped profile named {path_or_profile!r}; "
                          f"profiles: {', '.join(profile_names())}")
    return parse_config(res.read_text(), source=f"profile:{name}")
