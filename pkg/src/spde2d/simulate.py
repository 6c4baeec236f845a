"""Exact spectral simulation of the truncated field.

Each coordinate process is sampled with its exact Gaussian AR(1) transition,
so there is no time-discretisation error; the only approximation is the
truncation to ``l1 <= K``, ``l2 <= L``.

Random numbers come from one counter-based Philox stream per row ``l1``,
keyed by ``(seed, l1)``; the row stream yields the innovations of modes
``l2 = 1, 2, ...`` one after another.  Paths are therefore unchanged when
``K`` or ``L`` grow and do not depend on how rows are grouped into blocks.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from .model import (
    ModelParams, NoiseSpec, ObservationGrid, ValidationError, basis_matrix,
    derive_constants, eigenvalue_grid, noise_scale_grid,
)

DEFAULT_MEMORY_BUDGET = 1 << 30  # bytes
MAGIC = b"SPDEFS01"


@dataclass(frozen=True)
class SimulationConfig:
    params: ModelParams
    noise: NoiseSpec
    grid: ObservationGrid
    K: int = 256
    L: int = 256
    seed: int = 0
    # nonzero initial coordinates {(l1, l2): value}; empty means xi = 0
    xi: Dict[Tuple[int, int], float] = field(default_factory=dict)
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if int(self.K) != self.K or int(self.L) != self.L or self.K < 1 or self.L < 1:
            raise ValidationError(f"truncation K, L must be positive integers, got {self.K}, {self.L}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        for (l1, l2), v in self.xi.items():
            if not (1 <= l1 <= self.K and 1 <= l2 <= self.L):
                raise ValidationError(f"initial coordinate ({l1}, {l2}) lies outside the truncation")
            if not np.isfinite(v):
                raise ValidationError("initial coordinates must be finite")

    def as_dict(self) -> dict:
        return {
            "params": {k: getattr(self.params, k) for k in ("theta0", "theta1", "eta1", "theta2", "sigma")},
            "noise": {"kind": self.noise.kind.value, "alpha": self.noise.alpha,
                      "mu0": self.noise.mu0, "mu0_known": self.noise.mu0_known},
            "grid": {"N": self.grid.N, "M1": self.grid.M1, "M2": self.grid.M2},
            "K": int(self.K), "L": int(self.L), "seed": int(self.seed),
            "xi": sorted([[int(a), int(b), float(v)] for (a, b), v in self.xi.items()]),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_seed(self, seed: int) -> "SimulationConfig":
        return SimulationConfig(self.params, self.noise, self.grid, self.K, self.L, seed,
                                dict(self.xi), self.memory_budget)


@dataclass
class CoordinatePaths:
    """Coordinate values with axes (l1 - 1, l2 - 1, time index)."""

    values: np.ndarray

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def L(self) -> int:
        return self.values.shape[1]


@dataclass
class FieldSample:
    """Field values with layout (time index, point)."""

    times: np.ndarray
    points: np.ndarray  # shape (P, 2): columns y, z
    values: np.ndarray
    config_hash: str = ""
    time_indices: Optional[np.ndarray] = None  # indices into the full grid when subsampled

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if self.values.shape != (len(self.times), len(self.points)):
            raise ValidationError("values must have shape (n_times, n_points)")
        if self.time_indices is None:
            self.time_indices = np.arange(len(self.times))
        self._lookup = None

    @property
    def n_times(self) -> int:
        return len(self.times)

    def point_index(self, y: float, z: float) -> int:
        if self._lookup is None:
            self._lookup = {(float(a), float(b)): i for i, (a, b) in enumerate(self.points)}
        try:
            return self._lookup[(float(y), float(z))]
        except KeyError:
            raise KeyError(f"point (y={float(y)!r}, z={float(z)!r}) is not in the sample") from None

    def columns(self, ys, zs) -> np.ndarray:
        """Column indices for the tensor grid ``ys x zs``, shape (len(ys), len(zs))."""
        return np.array([[self.point_index(y, z) for z in zs] for y in ys], dtype=np.intp)

    def rows(self, idx) -> np.ndarray:
        """Positions of full-grid time indices ``idx`` within this sample."""
        pos = {int(t): i for i, t in enumerate(self.time_indices)}
        try:
            return np.array([pos[int(t)] for t in idx], dtype=np.intp)
        except KeyError as e:
            raise KeyError(f"time index {e.args[0]} is not in the sample") from None

    # -------------------------------------------------------------- persistence

    def save(self, path) -> None:
        header = {
            "config_hash": self.config_hash,
            "n_times": int(self.n_times),
            "n_points": int(len(self.points)),
            "dtype": "<f8",
            "layout": "times, time_indices, points (n_points x 2), values (n_times x n_points); row-major",
        }
        hb = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint64(len(hb)).astype("<u8").tobytes())
            fh.write(hb)
            for arr in (self.times, self.time_indices.astype(float), self.points, self.values):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "FieldSample":
        with open(path, "rb") as fh:
            if fh.read(8) != MAGIC:
                raise ValidationError(f"{path} is not a field-sample container")
            n = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
            header = json.loads(fh.read(n))
            T, P = header["n_times"], header["n_points"]
            raw = np.frombuffer(fh.read(), dtype="<f8")
        need = 2 * T + 2 * P + T * P
        if raw.size != need:
            raise ValidationError(f"{path}: payload has {raw.size} values, expected {need}")
        times = raw[:T].copy()
        tidx = raw[T:2 * T].astype(np.int64)
        pts = raw[2 * T:2 * T + 2 * P].reshape(P, 2).copy()
        vals = raw[2 * T + 2 * P:].reshape(T, P).copy()
        return cls(times, pts, vals, header["config_hash"], tidx)

    def to_csv(self, path_or_buf) -> None:
        """Long-format CSV with columns ``t, y, z, value``; meant for small grids."""
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            fh.write(f"# config_hash={self.config_hash}\n")
            fh.write("t,y,z,value\n")
            times, pts, vals = self.times.tolist(), self.points.tolist(), self.values.tolist()
            for i, t in enumerate(times):
                for p, (y, z) in enumerate(pts):
                    fh.write(f"{t!r},{y!r},{z!r},{vals[i][p]!r}\n")
        finally:
            if own:
                fh.close()


# ---------------------------------------------------------------- coordinate paths


def _row_normals(seed: int, l1: int, L: int, N: int) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(l1),))
    rng = np.random.Generator(np.random.Philox(ss))
    return rng.standard_normal(L * N).reshape(L, N)


def _transition(cfg: SimulationConfig):
    lam = eigenvalue_grid(cfg.params, cfg.K, cfg.L)
    if np.any(lam <= 0):
        raise ValidationError("all eigenvalues must be positive")
    s = noise_scale_grid(cfg.noise, cfg.params, cfg.K, cfg.L)
    d = cfg.grid.delta
    a = np.exp(-lam * d)
    sd = cfg.params.sigma * s * np.sqrt(-np.expm1(-2.0 * lam * d) / (2.0 * lam))
    return a, sd


def _iter_path_blocks(cfg: SimulationConfig, block: int = 32) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield ``(row offset, paths)`` with paths of shape (N+1, rows, L)."""
    a, sd = _transition(cfg)
    N = cfg.grid.N
    # noise, its transpose and the paths each hold rows * L * N doubles
    block = max(1, min(block, cfg.memory_budget // (24 * cfg.L * (N + 1))))
    x0 = np.zeros((cfg.K, cfg.L))
    for (l1, l2), v in cfg.xi.items():
        x0[l1 - 1, l2 - 1] = v
    for start in range(0, cfg.K, block):
        rows = range(start, min(cfg.K, start + block))
        z = np.stack([_row_normals(cfg.seed, l1 + 1, cfg.L, N) for l1 in rows])  # (B, L, N)
        eps = np.ascontiguousarray(z.transpose(2, 0, 1)) * sd[None, start:rows.stop]
        ab = a[start:rows.stop]
        out = np.empty((N + 1, len(rows), cfg.L))
        out[0] = x0[start:rows.stop]
        for i in range(N):
            np.multiply(ab, out[i], out=out[i + 1])
            out[i + 1] += eps[i]
        yield start, out


def sample_coordinate_paths(cfg: SimulationConfig) -> CoordinatePaths:
    """All coordinate paths as one dense (K, L, N+1) array."""
    need = 8 * cfg.K * cfg.L * (cfg.grid.N + 1)
    if need > cfg.memory_budget:
        raise ValidationError(
            f"dense coordinate array needs {need / 2**20:.0f} MiB, over the "
            f"{cfg.memory_budget / 2**20:.0f} MiB budget; use simulate_observations, which streams"
        )
    vals = np.empty((cfg.K, cfg.L, cfg.grid.N + 1))
    for start, blk in _iter_path_blocks(cfg):
        vals[start:start + blk.shape[1]] = blk.transpose(1, 2, 0)
    return CoordinatePaths(vals)


# ---------------------------------------------------------------- synthesis


def _tensor_plan(points: np.ndarray):
    uy, iy = np.unique(points[:, 0], return_inverse=True)
    uz, iz = np.unique(points[:, 1], return_inverse=True)
    return uy, iy.ravel(), uz, iz.ravel()


def _check_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.size and (pts.min() < 0 or pts.max() > 1):
        raise ValidationError("evaluation points must lie in [0, 1]^2")
    return pts


def _evaluate(blocks, cfg: SimulationConfig, pts: np.ndarray, tsel: np.ndarray) -> np.ndarray:
    c = derive_constants(cfg.params)
    uy, iy, uz, iz = _tensor_plan(pts)
    E1 = basis_matrix(cfg.K, uy, c.kappa)  # (Py, K)
    E2 = basis_matrix(cfg.L, uz, c.eta)  # (Pz, L)
    compact = uy.size * uz.size <= 4 * max(len(pts), 1)
    if compact:
        acc = np.zeros((tsel.size, uy.size, uz.size))
    else:
        acc = np.zeros((tsel.size, len(pts)))
    for start, blk in blocks:
        b = blk[tsel]  # (T, B, L)
        e1 = E1[:, start:start + b.shape[1]]
        if compact:
            acc += np.matmul(e1[None], b @ E2.T)
        else:
            # pointwise: sum_{l1,l2} E1[y_p, l1] x[l1, l2] E2[z_p, l2]
            acc += np.einsum("tbl,pb,pl->tp", b, e1[iy], E2[iz], optimize=True)
    if compact:
        return acc[:, iy, iz]
    return acc


def synthesize_field(paths: CoordinatePaths, cfg: SimulationConfig, points,
                     time_indices: Optional[Sequence[int]] = None) -> FieldSample:
    """Evaluate the truncated expansion at ``points`` for every (or the selected) time."""
    pts = _check_points(points)
    tsel = np.arange(cfg.grid.N + 1) if time_indices is None else np.asarray(time_indices, dtype=np.intp)
    blocks = [(0, paths.values.transpose(2, 0, 1))]
    vals = _evaluate(blocks, cfg, pts, tsel)
    return FieldSample(tsel / cfg.grid.N, pts, vals, cfg.config_hash(), tsel)


def grid_points(grid: ObservationGrid) -> np.ndarray:
    Y, Z = np.meshgrid(grid.ys, grid.zs, indexing="ij")
    return np.column_stack([Y.ravel(), Z.ravel()])


def tensor_points(ys, zs) -> np.ndarray:
    Y, Z = np.meshgrid(np.asarray(ys, float), np.asarray(zs, float), indexing="ij")
    return np.column_stack([Y.ravel(), Z.ravel()])


def simulate_observations(cfg: SimulationConfig, extra_points=(), include_grid: bool = True,
                          time_indices: Optional[Sequence[int]] = None,
                          block: int = 32) -> FieldSample:
    """Simulate one path realisation and evaluate it on the grid plus ``extra_points``.

    Coordinate paths are streamed in row blocks so the dense (K, L, N+1)
    array is never held in memory.
    """
    parts = []
    if include_grid:
        parts.append(grid_points(cfg.grid))
    extra = _check_points(extra_points) if len(extra_points) else np.empty((0, 2))
    parts.append(extra)
    pts = np.concatenate(parts) if parts else np.empty((0, 2))
    # drop duplicates, keeping first occurrence order
    _, first = np.unique(pts, axis=0, return_index=True)
    pts = pts[np.sort(first)]
    tsel = np.arange(cfg.grid.N + 1) if time_indices is None else np.asarray(time_indices, dtype=np.intp)
    vals = _evaluate(_iter_path_blocks(cfg, block), cfg, pts, tsel)
    return FieldSample(tsel / cfg.grid.N, pts, vals, cfg.config_hash(), tsel)


def simulate_views(cfg: SimulationConfig, views, block: int = 32):
    """Evaluate one path realisation on several ``(points, time_indices)`` views.

    ``time_indices=None`` selects every time.  All views share the same
    coordinate paths, which are generated once and streamed.
    """
    prepared = []
    for pts, tidx in views:
        pts = _check_points(pts)
        tsel = np.arange(cfg.grid.N + 1) if tidx is None else np.asarray(tidx, dtype=np.intp)
        prepared.append((pts, tsel))
    c = derive_constants(cfg.params)
    plans = []
    for pts, tsel in prepared:
        uy, iy, uz, iz = _tensor_plan(pts)
        if uy.size * uz.size > 4 * max(len(pts), 1):
            raise ValidationError("views must be (close to) tensor grids")
        plans.append((basis_matrix(cfg.K, uy, c.kappa), basis_matrix(cfg.L, uz, c.eta), iy, iz,
                      np.zeros((tsel.size, uy.size, uz.size))))
    for start, blk in _iter_path_blocks(cfg, block):
        for (pts, tsel), (E1, E2, _, _, acc) in zip(prepared, plans):
            b = blk[tsel]
            acc += np.matmul(E1[None, :, start:start + b.shape[1]], b @ E2.T)
    out = []
    h = cfg.config_hash()
    for (pts, tsel), (_, _, iy, iz, acc) in zip(prepared, plans):
        out.append(FieldSample(tsel / cfg.grid.N, pts, acc[:, iy, iz], h, tsel))
    return out
