"""Surface-angle estimation on depth blocks and the resulting RDO lambda scale.

Depth errors along the projection axis shrink by ``cos^2(theta)`` when measured
against the surface plane, where ``theta`` is the angle between the plane
normal ``(U, V, -1)`` and the projection axis. The encoder compensates by
multiplying lambda with ``1 / cos^2(theta)`` (clipped).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_MAX_SCALE = 2.0
SUB_BLOCK = 4

# Gradient filters on a 4x4 grid with x = column, y = row; both scaled by 40.
GRAD_X = np.tile(np.array([-3, -1, 1, 3], dtype=np.int64), (4, 1))
GRAD_Y = GRAD_X.T.copy()
GRAD_DENOM = 40

# Closed-form least-squares solve for (U, V, W) on the 4x4 grid with
# coordinates 1..4, times 40; rows act on the row-major flattened block.
PLANE_4X4 = np.stack([
    GRAD_X.ravel().astype(np.float64),
    GRAD_Y.ravel().astype(np.float64),
    2.5 - 2.5 * (GRAD_X + GRAD_Y).ravel(),
])


class SingularFitError(ValueError):
    """Raised when the (x, y) support of a plane fit is collinear."""


@dataclass(frozen=True)
class PlaneFit:
    U: float
    V: float
    W: float


@dataclass(frozen=True)
class NormalEstimate:
    u_hat: float
    v_hat: float
    cos2_theta: float
    lambda_scale: float


def plane_fit_lsq(points) -> PlaneFit:
    """Least-squares fit of ``z = U x + V y + W`` through the normal equations."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise SingularFitError("need at least 3 points")
    P = np.vstack([pts[:, 0], pts[:, 1], np.ones(len(pts))])
    A = P @ P.T
    if np.linalg.matrix_rank(A) < 3:
        raise SingularFitError("collinear (x, y) support")
    U, V, W = np.linalg.solve(A, P @ pts[:, 2])
    return PlaneFit(float(U), float(V), float(W))


def block_gradient_sums(block) -> tuple[int, int]:
    """Integer filter responses; divide by 40 for the slopes."""
    blk = np.asarray(block, dtype=np.int64)
    if blk.shape != (4, 4):
        raise ValueError(f"expected a 4x4 block, got {blk.shape}")
    return int((GRAD_X * blk).sum()), int((GRAD_Y * blk).sum())


def block_gradient(block) -> tuple[float, float]:
    sx, sy = block_gradient_sums(block)
    return sx / GRAD_DENOM, sy / GRAD_DENOM


def block_plane(block) -> PlaneFit:
    """(U, V, W) of a 4x4 block via the constant closed-form matrix."""
    z = np.asarray(block, dtype=np.float64).reshape(16)
    U, V, W = PLANE_4X4 @ z / GRAD_DENOM
    return PlaneFit(float(U), float(V), float(W))


def normal_from_slopes(u_hat: float, v_hat: float, max_scale: float = DEFAULT_MAX_SCALE) -> NormalEstimate:
    cos2 = 1.0 / (u_hat * u_hat + v_hat * v_hat + 1.0)
    return NormalEstimate(u_hat, v_hat, cos2, min(1.0 / cos2, max_scale))


def ctu_normal(depth_block, occupancy_block=None, max_scale: float = DEFAULT_MAX_SCALE,
               occupied_blocks_only: bool = True) -> NormalEstimate:
    """Average 4x4 slopes over a CTU and derive cos^2(theta) and the lambda scale.

    With ``occupied_blocks_only`` only sub-blocks holding at least one occupied
    pixel are averaged; a CTU without any counts as flat.
    """
    depth = np.asarray(depth_block, dtype=np.int64)
    h, w = depth.shape
    if h % SUB_BLOCK or w % SUB_BLOCK:
        raise ValueError("CTU dimensions must be multiples of 4")
    tiles = depth.reshape(h // 4, 4, w // 4, 4).transpose(0, 2, 1, 3)
    sx = np.einsum("abij,ij->ab", tiles, GRAD_X)
    sy = np.einsum("abij,ij->ab", tiles, GRAD_Y)

    if occupied_blocks_only and occupancy_block is not None:
        occ = np.asarray(occupancy_block, dtype=bool)
        keep = occ.reshape(h // 4, 4, w // 4, 4).any(axis=(1, 3))
    else:
        keep = np.ones(sx.shape, dtype=bool)
    n = int(keep.sum())
    if n == 0:
        return NormalEstimate(0.0, 0.0, 1.0, 1.0)
    u_hat = float(sx[keep].sum()) / (GRAD_DENOM * n)
    v_hat = float(sy[keep].sum()) / (GRAD_DENOM * n)
    return normal_from_slopes(u_hat, v_hat, max_scale)


def project_distortion(d_sse: float, cos2_theta: float) -> float:
    """Depth-axis SSE projected onto the surface normal."""
    if not 0.0 < cos2_theta <= 1.0:
        raise ValueError("cos2_theta must be in (0, 1]")
    return d_sse * cos2_theta
