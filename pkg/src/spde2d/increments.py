"""Triple increments of the field on the thinned spatial grid and their
normalised squared averages."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ObservationGrid, ThinnedSpatialGrid, ValidationError
from .simulate import FieldSample


@dataclass
class TripleIncrementTensor:
    """``T[i-1, j-1, k-1]`` for ``i = 1..N``, ``j = 1..m1``, ``k = 1..m2``."""

    values: np.ndarray
    delta_t: float
    y_mid: np.ndarray
    z_mid: np.ndarray

    @property
    def tilde(self) -> np.ndarray:
        """Overlapping sums ``T_i + T_{i+1}``, ``i = 1..N-1``."""
        return self.values[:-1] + self.values[1:]


@dataclass
class SquaredIncrementStats:
    A: np.ndarray
    A_tilde: np.ndarray
    y_mid: np.ndarray
    z_mid: np.ndarray

    @property
    def m(self) -> int:
        return self.A.size

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("j,k,y_mid,z_mid,A,A_tilde\n")
            ym, zm = np.asarray(self.y_mid).tolist(), np.asarray(self.z_mid).tolist()
            A, At = self.A.tolist(), self.A_tilde.tolist()
            for j in range(len(A)):
                for k in range(len(A[0])):
                    fh.write(f"{j + 1},{k + 1},{ym[j]!r},{zm[k]!r},{A[j][k]!r},{At[j][k]!r}\n")


def snapped_coordinates(sgrid: ThinnedSpatialGrid, grid: ObservationGrid):
    """Nearest uniform-grid coordinates to the thinned points."""
    ys = np.round(sgrid.ys * grid.M1) / grid.M1
    zs = np.round(sgrid.zs * grid.M2) / grid.M2
    return ys, zs


def spatial_double_difference(v: np.ndarray) -> np.ndarray:
    """Rectangle differences over the last two axes."""
    return v[..., 1:, 1:] - v[..., :-1, 1:] - v[..., 1:, :-1] + v[..., :-1, :-1]


def triple_increments(sample: FieldSample, sgrid: ThinnedSpatialGrid,
                      ys: Optional[np.ndarray] = None,
                      zs: Optional[np.ndarray] = None) -> TripleIncrementTensor:
    """Temporal difference of the spatial rectangle difference at every cell.

    ``ys``/``zs`` override the thinned coordinates (used for snap-to-grid).
    """
    ys = sgrid.ys if ys is None else np.asarray(ys, float)
    zs = sgrid.zs if zs is None else np.asarray(zs, float)
    try:
        cols = sample.columns(ys, zs)
    except KeyError as e:
        raise ValidationError(f"thinned grid incomplete: {e.args[0]}") from None
    tidx = np.asarray(sample.time_indices)
    if tidx.size < 2 or np.any(np.diff(tidx) != 1):
        raise ValidationError("triple increments need consecutive time indices")
    v = sample.values[:, cols]  # (T, m1+1, m2+1)
    dt = np.diff(sample.times).mean()
    T = spatial_double_difference(np.diff(v, axis=0))
    return TripleIncrementTensor(T, float(dt), 0.5 * (ys[:-1] + ys[1:]), 0.5 * (zs[:-1] + zs[1:]))


def squared_stats(t: TripleIncrementTensor, alpha: float, delta: float) -> SquaredIncrementStats:
    """``A = sum_i T^2 / (N Delta^alpha)`` and the overlapping analogue at ``2 Delta``.

    Both averages divide by the number ``N`` of triple increments.
    """
    if not 0.0 < alpha < 2.0:
        raise ValidationError("alpha must lie in (0, 2)")
    N = t.values.shape[0]
    A = np.einsum("ijk,ijk->jk", t.values, t.values) / (N * delta ** alpha)
    tt = t.tilde
    At = np.einsum("ijk,ijk->jk", tt, tt) / (N * (2.0 * delta) ** alpha)
    return SquaredIncrementStats(A, At, t.y_mid, t.z_mid)
