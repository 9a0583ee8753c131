"""Point-to-point (D1) and point-to-plane (D2) geometry errors, PSNR and BD-rate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .pointcloud import PointCloud

PSNR_CAP = 999.99
DEFAULT_PEAK_FACTOR = 3.0


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class GeomError:
    e_c2c_ab: float
    e_c2c_ba: float
    e_c2p_ab: float
    e_c2p_ba: float

    @property
    def symmetric_c2c(self) -> float:
        return max(self.e_c2c_ab, self.e_c2c_ba)

    @property
    def symmetric_c2p(self) -> float:
        return max(self.e_c2p_ab, self.e_c2p_ba)


@dataclass
class RdPoint:
    bits_total: int
    bits_geometry: int
    d1_psnr: float
    d2_psnr: float
    points_in: int = 0
    points_out: int = 0
    points_missed: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def nearest_neighbors(query: np.ndarray, ref: np.ndarray, tree: cKDTree | None = None) -> np.ndarray:
    """Index of the nearest reference point per query point; ties go to the lowest index."""
    q = np.asarray(query)
    r = np.asarray(ref)
    tree = tree if tree is not None else cKDTree(r)
    k = min(2, len(r))
    dist, idx = tree.query(q, k=k)
    if k == 1:
        return np.asarray(idx, dtype=np.int64).reshape(-1)
    best = idx[:, 0].astype(np.int64)
    # kd-tree order among equidistant points is arbitrary: resolve those exactly
    maybe_tie = dist[:, 1] <= dist[:, 0] * (1 + 1e-9) + 1e-12
    for i in np.flatnonzero(maybe_tie):
        cand = np.asarray(tree.query_ball_point(q[i], dist[i, 0] * (1 + 1e-9) + 1e-12), dtype=np.int64)
        d2 = ((r[cand] - q[i]) ** 2).sum(axis=1)
        cand = cand[d2 == d2.min()]
        best[i] = cand.min()
    return best


def _check(cloud: PointCloud, name: str) -> None:
    if len(cloud) == 0:
        raise MetricError(f"{name} cloud is empty")


def _displacements(test: PointCloud, ref: PointCloud, tree=None) -> tuple[np.ndarray, np.ndarray]:
    _check(test, "test")
    _check(ref, "reference")
    nn = nearest_neighbors(test.points, ref.points, tree)
    diff = np.asarray(test.points, dtype=np.float64) - np.asarray(ref.points, dtype=np.float64)[nn]
    return diff, nn


def d1_error(test: PointCloud, ref: PointCloud) -> float:
    """Mean squared distance from each test point to its nearest reference point."""
    diff, _ = _displacements(test, ref)
    return float((diff ** 2).sum(axis=1).mean())


def d2_error(test: PointCloud, ref: PointCloud) -> float:
    """Mean squared projection of the nearest-neighbour displacement onto the reference normal."""
    if not ref.has_normals:
        raise MetricError("reference cloud has no normals")
    diff, nn = _displacements(test, ref)
    return float((np.einsum("ij,ij->i", diff, ref.normals[nn]) ** 2).mean())


def geometry_error(recon: PointCloud, original: PointCloud) -> GeomError:
    """Both directions of D1 and D2 between a reconstruction and its original.

    The reverse direction (original -> reconstruction) projects onto the
    original point's own normal, since reconstructions carry none.
    """
    if not original.has_normals:
        raise MetricError("original cloud has no normals")
    diff_ab, nn_ab = _displacements(recon, original)
    diff_ba, _ = _displacements(original, recon)
    c2c_ab = float((diff_ab ** 2).sum(axis=1).mean())
    c2c_ba = float((diff_ba ** 2).sum(axis=1).mean())
    c2p_ab = float((np.einsum("ij,ij->i", diff_ab, original.normals[nn_ab]) ** 2).mean())
    c2p_ba = float((np.einsum("ij,ij->i", diff_ba, original.normals) ** 2).mean())
    return GeomError(c2c_ab, c2c_ba, c2p_ab, c2p_ba)


def geom_psnr(mse: float, bit_depth: int, peak_factor: float = DEFAULT_PEAK_FACTOR) -> float:
    if mse < 0:
        raise MetricError("negative mse")
    if mse == 0:
        return PSNR_CAP
    peak = (1 << bit_depth) - 1
    return min(10.0 * math.log10(peak_factor * peak * peak / mse), PSNR_CAP)


def _bd_curve(points: list[RdPoint], metric: str) -> tuple[np.ndarray, np.ndarray]:
    if len(points) < 4:
        raise MetricError(f"BD-rate needs at least 4 points per curve, got {len(points)}")
    psnr = np.array([getattr(p, f"{metric}_psnr") for p in points], dtype=np.float64)
    rate = np.array([p.bits_geometry for p in points], dtype=np.float64)
    if (rate <= 0).any():
        raise MetricError("rates must be positive")
    order = np.argsort(psnr)
    psnr, rate = psnr[order], rate[order]
    if (np.diff(psnr) <= 0).any():
        raise MetricError("PSNR values must be strictly monotone")
    return psnr, np.log10(rate)


def bd_rate(anchor: list[RdPoint], test: list[RdPoint], metric: str = "d2") -> float:
    """Average bitrate difference (percent) at equal quality; negative means savings.

    Cubic fit of log10(rate) against PSNR, integrated over the overlapping
    PSNR interval.
    """
    if metric not in ("d1", "d2"):
        raise MetricError(f"unknown metric {metric!r}")
    pa, ra = _bd_curve(anchor, metric)
    pt, rt = _bd_curve(test, metric)
    lo = max(pa[0], pt[0])
    hi = min(pa[-1], pt[-1])
    if lo >= hi:
        raise MetricError("PSNR ranges do not overlap")
    ia = np.polyint(np.polyfit(pa, ra, 3))
    it = np.polyint(np.polyfit(pt, rt, 3))
    avg = ((np.polyval(it, hi) - np.polyval(it, lo)) - (np.polyval(ia, hi) - np.polyval(ia, lo))) / (hi - lo)
    return float((10.0 ** avg - 1.0) * 100.0)
