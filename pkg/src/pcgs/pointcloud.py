"""Point cloud container, ASCII PLY I/O, voxelization and normal estimation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree


class PlyError(ValueError):
    """Base class for PLY parsing failures."""


class PlyHeaderError(PlyError):
    pass


class PlyFormatError(PlyError):
    pass


class PlyPropertyError(PlyError):
    pass


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered point set with optional per-point unit normals.

    ``bit_depth`` is ``None`` for raw (not yet voxelized) clouds. Voxelized
    clouds hold ``int64`` coordinates in ``[0, 2**bit_depth - 1]``.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    bit_depth: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.ndim != 2 or pts.shape[1] != 3:
            pts = pts.reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ValueError(f"{len(nrm)} normals for {len(pts)} points")
            object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def with_normals(self, normals) -> PointCloud:
        return PointCloud(self.points, normals, self.bit_depth)


def _unit(normals: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(normals, axis=1)
    out = np.empty_like(normals)
    ok = norms > 0
    out[ok] = normals[ok] / norms[ok, None]
    out[~ok] = (0.0, 0.0, 1.0)
    return out


def load_ply(path) -> PointCloud:
    """Read an ASCII PLY file. Coordinates are returned verbatim."""
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyHeaderError(f"{path}: missing 'ply' magic line")

    elements: list[tuple[str, int, list[tuple[str, bool]]]] = []
    fmt = None
    body_start = None
    for i, raw in enumerate(lines[1:], start=1):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 3:
                raise PlyHeaderError(f"{path}: malformed format line {raw!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise PlyHeaderError(f"{path}: malformed element line {raw!r}")
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise PlyHeaderError(f"{path}: property before any element")
            if len(tok) >= 5 and tok[1] == "list":
                elements[-1][2].append((tok[4], True))
            elif len(tok) == 3:
                elements[-1][2].append((tok[2], False))
            else:
                raise PlyHeaderError(f"{path}: malformed property line {raw!r}")
        elif tok[0] == "end_header":
            body_start = i + 1
            break
        else:
            raise PlyHeaderError(f"{path}: unexpected header line {raw!r}")
    if body_start is None:
        raise PlyHeaderError(f"{path}: no end_header")
    if fmt is None:
        raise PlyHeaderError(f"{path}: no format line")
    if fmt != "ascii":
        raise PlyFormatError(f"{path}: unsupported PLY format {fmt!r} (ASCII only)")

    vertex = None
    cursor = body_start
    for name, count, props in elements:
        if name == "vertex":
            vertex = (cursor, count, props)
        cursor += count
    if vertex is None:
        raise PlyPropertyError(f"{path}: no vertex element")
    start, count, props = vertex
    names = [p for p, is_list in props]
    if any(is_list for _, is_list in props):
        raise PlyHeaderError(f"{path}: list property on vertex element")
    missing = [c for c in ("x", "y", "z") if c not in names]
    if missing:
        raise PlyPropertyError(f"{path}: missing coordinate properties {missing}")

    rows = lines[start:start + count]
    if len(rows) < count:
        raise PlyHeaderError(f"{path}: expected {count} vertices, found {len(rows)}")
    try:
        data = np.array([r.split()[:len(names)] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise PlyHeaderError(f"{path}: bad vertex data ({exc})") from None
    data = data.reshape(count, len(names))

    col = {n: i for i, n in enumerate(names)}
    pts = data[:, [col["x"], col["y"], col["z"]]]
    normals = None
    if all(c in col for c in ("nx", "ny", "nz")):
        normals = _unit(data[:, [col["nx"], col["ny"], col["nz"]]])
    return PointCloud(pts, normals)


def save_ply(cloud: PointCloud, path) -> None:
    """Write ASCII PLY; voxelized clouds get integer coordinates."""
    integral = cloud.bit_depth is not None
    header = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
    ctype = "int" if integral else "double"
    header += [f"property {ctype} {c}" for c in "xyz"]
    if cloud.has_normals:
        header += [f"property double {c}" for c in ("nx", "ny", "nz")]
    header.append("end_header")

    if integral:
        cols = [[str(int(v)) for v in p] for p in cloud.points]
    else:
        cols = [[repr(float(v)) for v in p] for p in cloud.points]
    if cloud.has_normals:
        for row, n in zip(cols, cloud.normals):
            row.extend(repr(float(v)) for v in n)
    body = [" ".join(r) for r in cols]
    Path(path).write_text("\n".join(header + body) + "\n", encoding="ascii")


def _dedup_first(points: np.ndarray) -> np.ndarray:
    """Indices of first occurrences, in original order."""
    _, first = np.unique(points, axis=0, return_index=True)
    return np.sort(first)


def voxelize(cloud: PointCloud, bit_depth: int) -> PointCloud:
    """Map a cloud onto the integer grid ``[0, 2**bit_depth - 1]^3``.

    A cloud already voxelized at ``bit_depth`` only gets deduplicated. Otherwise
    negative coordinates are shifted to zero and all axes are scaled by one
    factor so the largest coordinate lands on ``2**bit_depth - 1``.
    """
    if not 1 <= bit_depth <= 16:
        raise ValueError(f"bit_depth must be in [1, 16], got {bit_depth}")
    if len(cloud) == 0:
        raise ValueError("cannot voxelize an empty cloud")

    if cloud.bit_depth == bit_depth:
        grid = np.asarray(cloud.points, dtype=np.int64)
    else:
        pts = np.asarray(cloud.points, dtype=np.float64)
        shifted = pts - np.minimum(pts.min(axis=0), 0.0)
        top = shifted.max()
        scale = (2 ** bit_depth - 1) / top if top > 0 else 1.0
        grid = np.floor(shifted * scale + 0.5).astype(np.int64)
        grid = np.clip(grid, 0, 2 ** bit_depth - 1)

    keep = _dedup_first(grid)
    normals = cloud.normals[keep] if cloud.has_normals else None
    return PointCloud(grid[keep], normals, bit_depth)


def knn_indices(points: np.ndarray, k: int, tree: cKDTree | None = None) -> np.ndarray:
    """k nearest neighbours (self included) per point, ties broken by index.

    Integer coordinates compare squared distances exactly.
    """
    pts = np.asarray(points)
    tree = tree if tree is not None else cKDTree(pts)
    dist, _ = tree.query(pts, k=k)
    dist = dist.reshape(len(pts), -1)
    radius = dist[:, -1] * (1 + 1e-9) + 1e-9
    out = np.empty((len(pts), k), dtype=np.int64)
    for i, cand in enumerate(tree.query_ball_point(pts, radius)):
        cand = np.asarray(cand, dtype=np.int64)
        d2 = ((pts[cand] - pts[i]) ** 2).sum(axis=1)
        order = np.lexsort((cand, d2))
        out[i] = cand[order[:k]]
    return out


def estimate_normals(cloud: PointCloud, k: int = 16, diagnostics: Counter | None = None) -> PointCloud:
    """Least-squares plane normal over each point's k-neighbourhood.

    Normals are signed to point away from the bounding-box centre along their
    dominant axis. Collinear neighbourhoods fall back to ``(0, 0, 1)`` and are
    counted under ``diagnostics["degenerate_normals"]``.
    """
    n = len(cloud)
    if k < 3 or n < k:
        raise ValueError(f"need |points| >= k >= 3 (|points|={n}, k={k})")
    pts = np.asarray(cloud.points, dtype=np.float64)
    nbrs = knn_indices(cloud.points, k)

    local = pts[nbrs]
    centred = local - local.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centred, centred)
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()

    scale = np.maximum(evals[:, 2], 1e-300)
    degenerate = evals[:, 1] <= 1e-10 * scale
    normals[degenerate] = (0.0, 0.0, 1.0)
    if diagnostics is not None:
        diagnostics["degenerate_normals"] += int(degenerate.sum())

    centre = (pts.min(axis=0) + pts.max(axis=0)) / 2.0
    dominant = np.argmax(np.abs(normals), axis=1)
    rows = np.arange(n)
    outward = np.where(pts[rows, dominant] >= centre[dominant], 1.0, -1.0)
    flip = np.sign(normals[rows, dominant]) != outward
    normals[flip & ~degenerate] *= -1.0
    return cloud.with_normals(_unit(normals))
