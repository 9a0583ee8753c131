"""Patch segmentation, near/far depth projection, packing, padding and inversion."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .pointcloud import PointCloud

# Signed projection axes in tie-break order.
AXIS_NAMES = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")
AXIS_VECTORS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64
)
# (depth axis, column axis, row axis) per signed axis
_AXIS_LAYOUT = {0: (0, 1, 2), 2: (1, 0, 2), 4: (2, 0, 1)}

GRID = 8
MIN_PATCH_SIZE = 4
DEFAULT_FRAME_WIDTH = 640


def axis_layout(axis: int) -> tuple[int, int, int]:
    return _AXIS_LAYOUT[axis - axis % 2]


def is_negative(axis: int) -> bool:
    return axis % 2 == 1


@dataclass
class Patch:
    """One projected patch.

    ``near_depth``/``far_depth``/``occupancy`` are ``height x width`` maps; they
    are dropped (``None``) in patch tables carried by a frame pair.
    """

    axis: int
    origin3d: tuple[int, int, int]
    width: int
    height: int
    placement2d: tuple[int, int] = (0, 0)
    near_depth: np.ndarray | None = field(default=None, repr=False)
    far_depth: np.ndarray | None = field(default=None, repr=False)
    occupancy: np.ndarray | None = field(default=None, repr=False)
    missed: int = 0

    def footprint(self) -> tuple[slice, slice]:
        u0, v0 = self.placement2d
        return slice(v0, v0 + self.height), slice(u0, u0 + self.width)

    def header(self) -> Patch:
        return replace(self, near_depth=None, far_depth=None, occupancy=None)


@dataclass
class GeometryFramePair:
    near: np.ndarray
    far: np.ndarray
    occupancy: np.ndarray
    patches: list[Patch]
    bit_depth: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.near.shape

    def copy(self) -> GeometryFramePair:
        return GeometryFramePair(
            self.near.copy(), self.far.copy(), self.occupancy.copy(), list(self.patches), self.bit_depth
        )


def assign_axes(normals: np.ndarray) -> np.ndarray:
    # argmax keeps the first maximum, i.e. the +X,-X,+Y,-Y,+Z,-Z order on ties
    return np.argmax(normals @ AXIS_VECTORS.T, axis=1)


def _components(points: np.ndarray) -> np.ndarray:
    """26-connected component label per point, numbered by first point index."""
    n = len(points)
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    pairs = cKDTree(points).query_pairs(r=1.0, p=np.inf, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # relabel in order of first appearance
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[labels]


def segment_patches(cloud: PointCloud, min_patch_size: int = MIN_PATCH_SIZE) -> list[tuple[np.ndarray, int]]:
    """Group points into connected same-axis patches.

    Returns ``(point indices, axis)`` pairs ordered by each patch's smallest
    point index.
    """
    if not cloud.has_normals:
        raise ValueError("segment_patches needs normals")
    pts = np.asarray(cloud.points, dtype=np.float64)
    axes = assign_axes(cloud.normals)

    groups: list[tuple[np.ndarray, int]] = []
    for axis in range(6):
        idx = np.flatnonzero(axes == axis)
        if len(idx) == 0:
            continue
        labels = _components(pts[idx])
        comps = [idx[labels == c] for c in range(labels.max() + 1)]
        big = [c for c in comps if len(c) >= min_patch_size]
        small = [c for c in comps if len(c) < min_patch_size]
        if big and small:
            owners = np.concatenate([np.full(len(c), j) for j, c in enumerate(big)])
            tree = cKDTree(pts[np.concatenate(big)])
            extra: list[list[np.ndarray]] = [[] for _ in big]
            for c in small:
                dist, nearest = tree.query(pts[c])
                j = owners[nearest[np.argmin(dist)]]
                extra[j].append(c)
            big = [np.sort(np.concatenate([b, *e])) for b, e in zip(big, extra)]
            small = []
        groups.extend((c, axis) for c in big + small)
    groups.sort(key=lambda g: int(g[0].min()))
    return groups


def project_patch(cloud: PointCloud, indices, axis: int, tau: int) -> Patch:
    """Project points onto near (min) and far (max within tau) depth maps."""
    indices = np.asarray(indices)
    if len(indices) == 0:
        raise ValueError("empty patch")
    if tau < 0:
        raise ValueError("surface thickness must be non-negative")
    pts = np.asarray(cloud.points, dtype=np.int64)[indices]
    d_ax, u_ax, v_ax = axis_layout(axis)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)

    origin = lo.copy()
    if is_negative(axis):
        origin[d_ax] = hi[d_ax]
        depth = hi[d_ax] - pts[:, d_ax]
    else:
        depth = pts[:, d_ax] - lo[d_ax]
    u = pts[:, u_ax] - lo[u_ax]
    v = pts[:, v_ax] - lo[v_ax]
    width = int(hi[u_ax] - lo[u_ax] + 1)
    height = int(hi[v_ax] - lo[v_ax] + 1)

    big = np.iinfo(np.int64).max
    near = np.full((height, width), big, dtype=np.int64)
    np.minimum.at(near, (v, u), depth)
    in_window = depth <= near[v, u] + tau
    far = np.zeros((height, width), dtype=np.int64)
    np.maximum.at(far, (v[in_window], u[in_window]), depth[in_window])

    occupancy = near != big
    near[~occupancy] = 0
    far[~occupancy] = 0
    return Patch(
        axis=int(axis),
        origin3d=tuple(int(c) for c in origin),
        width=width,
        height=height,
        near_depth=near,
        far_depth=far,
        occupancy=occupancy,
        missed=int((~in_window).sum()),
    )


def _align(value: int, grid: int = GRID) -> int:
    return -(-value // grid) * grid


def pack_patches(patches: list[Patch], frame_width: int = DEFAULT_FRAME_WIDTH, bit_depth: int = 10) -> GeometryFramePair:
    """Shelf-pack patches (tallest first) on an 8-pixel grid.

    The frame height is rounded up to a multiple of 64. Unoccupied pixels are
    left at zero; run :func:`pad_frames` afterwards.
    """
    if frame_width <= 0 or frame_width % GRID:
        raise ValueError(f"frame width must be a positive multiple of {GRID}")
    for p in patches:
        if p.width > frame_width:
            raise ValueError(f"patch of width {p.width} does not fit frame width {frame_width}")

    order = sorted(range(len(patches)), key=lambda i: -patches[i].height)
    placed: list[Patch | None] = [None] * len(patches)
    x = y = shelf_h = 0
    for i in order:
        p = patches[i]
        if x > 0 and x + p.width > frame_width:
            y += shelf_h
            x = shelf_h = 0
        if shelf_h == 0:
            shelf_h = _align(p.height)
        placed[i] = replace(p, placement2d=(x, y))
        x += _align(p.width)
    height = max(64, -(-(y + shelf_h) // 64) * 64)

    near = np.zeros((height, frame_width), dtype=np.int64)
    far = np.zeros_like(near)
    occ = np.zeros((height, frame_width), dtype=bool)
    for p in placed:
        rows, cols = p.footprint()
        m = p.occupancy
        near[rows, cols][m] = p.near_depth[m]
        far[rows, cols][m] = p.far_depth[m]
        occ[rows, cols] |= m
    return GeometryFramePair(near, far, occ, [p.header() for p in placed], bit_depth)


def pad_frames(frames: GeometryFramePair) -> GeometryFramePair:
    """Fill unoccupied pixels block by block (4x4, raster order).

    Fill values are taken from the near frame and written to both frames, so
    near and far agree on every unoccupied pixel.
    """
    near = frames.near.copy()
    occ = frames.occupancy
    h, w = near.shape
    fallback = 2 ** (frames.bit_depth - 1)
    bs = 4
    offs = np.array([(r, c) for r in range(bs) for c in range(bs)])
    for by in range(0, h, bs):
        for bx in range(0, w, bs):
            blk_occ = occ[by:by + bs, bx:bx + bs]
            if blk_occ.all():
                continue
            blk = near[by:by + bs, bx:bx + bs]
            if not blk_occ.any():
                if by > 0:
                    blk[:, :] = near[by - 1, bx:bx + bs][None, :]
                elif bx > 0:
                    blk[:, :] = near[by:by + bs, bx - 1][:, None]
                else:
                    blk[:, :] = fallback
                continue
            src = offs[blk_occ.ravel()]
            for r, c in offs[~blk_occ.ravel()]:
                d2 = (src[:, 0] - r) ** 2 + (src[:, 1] - c) ** 2
                # src is in raster order, so argmin picks smaller row, then column
                sr, sc = src[np.argmin(d2)]
                blk[r, c] = blk[sr, sc]
    far = np.where(occ, frames.far, near)
    return GeometryFramePair(near, far, occ.copy(), list(frames.patches), frames.bit_depth)


def patch_index_map(shape: tuple[int, int], patches: list[Patch]) -> np.ndarray:
    """Per-pixel patch index (-1 outside every footprint)."""
    idx = np.full(shape, -1, dtype=np.int64)
    for i, p in enumerate(patches):
        rows, cols = p.footprint()
        idx[rows, cols] = np.where(idx[rows, cols] < 0, i, idx[rows, cols])
    return idx


class CorruptPatchTable(ValueError):
    pass


def reconstruct_cloud(frames: GeometryFramePair, patches: list[Patch] | None = None, tau: int = 4) -> PointCloud:
    """Invert the projection: one near point per occupied pixel, plus the far
    point where it is deeper. Far depths are clamped to ``[near, near + tau]``.
    """
    patches = frames.patches if patches is None else patches
    b = frames.bit_depth
    occ = frames.occupancy
    owner = patch_index_map(occ.shape, patches)
    if (owner[occ] < 0).any():
        raise CorruptPatchTable("occupied pixel outside every patch footprint")

    near_all = frames.near.astype(np.int64)
    far_all = np.clip(frames.far.astype(np.int64), near_all, near_all + tau)
    out = []
    for i, p in enumerate(patches):
        rows, cols = np.nonzero(occ & (owner == i))
        if len(rows) == 0:
            continue
        d_ax, u_ax, v_ax = axis_layout(p.axis)
        sign = -1 if is_negative(p.axis) else 1
        near = near_all[rows, cols]
        far = far_all[rows, cols]
        extra = far > near
        depth = np.concatenate([near, far[extra]])
        r = np.concatenate([rows, rows[extra]])
        c = np.concatenate([cols, cols[extra]])
        pts = np.empty((len(depth), 3), dtype=np.int64)
        pts[:, d_ax] = p.origin3d[d_ax] + sign * depth
        pts[:, u_ax] = p.origin3d[u_ax] + c - p.placement2d[0]
        pts[:, v_ax] = p.origin3d[v_ax] + r - p.placement2d[1]
        out.append(pts)
    if not out:
        return PointCloud(np.zeros((0, 3), dtype=np.int64), None, b)
    pts = np.clip(np.concatenate(out), 0, 2 ** b - 1)
    _, first = np.unique(pts, axis=0, return_index=True)
    return PointCloud(pts[np.sort(first)], None, b)


def write_pgm(path, frame: np.ndarray) -> None:
    """16-bit binary PGM dump."""
    h, w = frame.shape
    data = np.clip(frame, 0, 65535).astype(">u2").tobytes()
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode() + data)


def write_pbm(path, mask: np.ndarray) -> None:
    h, w = mask.shape
    data = np.packbits(mask.astype(np.uint8), axis=1).tobytes()
    Path(path).write_bytes(f"P4\n{w} {h}\n".encode() + data)
