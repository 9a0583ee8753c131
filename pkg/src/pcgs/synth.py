"""Deterministic synthetic voxel clouds for desk-scale experiments.

Every kind is a height field (or six, for the cube) carrying a seeded
multi-scale relief so that coding cost responds to the quantizer.
"""

from __future__ import annotations

import numpy as np

from .pointcloud import PointCloud

KINDS = ("plane", "ramp", "cube", "wavy")


class Relief:
    """Sum of random plane waves with analytic gradient."""

    def __init__(self, rng: np.random.Generator, amplitude: float, waves: int = 4,
                 periods: tuple[float, float] = (8.0, 24.0)):
        self.amp = amplitude * rng.dirichlet(np.ones(waves))
        theta = rng.uniform(0.0, np.pi, waves)
        k = 2.0 * np.pi / rng.uniform(*periods, waves)
        self.kx = k * np.cos(theta)
        self.ky = k * np.sin(theta)
        self.phase = rng.uniform(0.0, 2.0 * np.pi, waves)

    def _arg(self, x, y):
        return np.multiply.outer(x, self.kx) + np.multiply.outer(y, self.ky) + self.phase

    def __call__(self, x, y):
        return (self.amp * np.sin(self._arg(x, y))).sum(axis=-1)

    def grad(self, x, y):
        c = self.amp * np.cos(self._arg(x, y))
        return (c * self.kx).sum(axis=-1), (c * self.ky).sum(axis=-1)


def _sheet(f, grad, n: int, m: int, rng: np.random.Generator, thickness: float):
    """Voxelize ``h = f(u, v)`` over an n x m grid; returns local (u, v, h) and normals.

    Each column spans the rounded heights at its four pixel corners, so the
    surface stays face-connected; with probability ``thickness`` one extra
    voxel is stacked on top.
    """
    vs, us = np.mgrid[0:m, 0:n]
    us = us.ravel().astype(np.float64)
    vs = vs.ravel().astype(np.float64)
    corners = np.stack([f(us + du, vs + dv) for du in (-0.5, 0.5) for dv in (-0.5, 0.5)])
    lo = np.floor(corners.min(axis=0) + 0.5).astype(np.int64)
    hi = np.floor(corners.max(axis=0) + 0.5).astype(np.int64)
    hi = hi + (rng.random(len(us)) < thickness)
    gu, gv = grad(us, vs)
    nrm = np.stack([-gu, -gv, np.ones_like(gu)], axis=1)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)

    rep = np.repeat(np.arange(len(us)), hi - lo + 1)
    h = np.concatenate([np.arange(a, b + 1) for a, b in zip(lo, hi)])
    pts = np.stack([us[rep].astype(np.int64), vs[rep].astype(np.int64), h], axis=1)
    return pts, nrm[rep]


def _finish(pts: np.ndarray, nrm: np.ndarray, bit_depth: int) -> PointCloud:
    pts = pts - np.minimum(pts.min(axis=0), 0)
    if pts.max() >= 1 << bit_depth:
        raise ValueError(f"synthetic cloud does not fit {bit_depth} bits; use a smaller size")
    _, first = np.unique(pts, axis=0, return_index=True)
    keep = np.sort(first)
    return PointCloud(pts[keep], nrm[keep], bit_depth)


def _height_field(n, rng, thickness, bit_depth, base, base_grad, relief_amp):
    relief = Relief(rng, relief_amp)
    pts, nrm = _sheet(lambda x, y: base(x, y) + relief(x, y),
                      lambda x, y: tuple(a + b for a, b in zip(base_grad(x, y), relief.grad(x, y))),
                      n, n, rng, thickness)
    pts[:, 2] += 2
    return _finish(pts, nrm, bit_depth)


def plane(n, rng, thickness=0.3, bit_depth=8, shift=0.0, relief=3.0) -> PointCloud:
    a = 0.3 + 0.2 * rng.random()
    b = 0.1 + 0.2 * rng.random()
    return _height_field(
        n, rng, thickness, bit_depth,
        lambda x, y: a * (x + shift) + b * y,
        lambda x, y: (np.full_like(x, a), np.full_like(y, b)),
        relief,
    )


def ramp(n, rng, thickness=0.3, bit_depth=8, shift=0.0, relief=3.0) -> PointCloud:
    s = 0.7 + 0.2 * rng.random()
    t = 0.1 + 0.1 * rng.random()
    x0, x1 = n / 3.0, 2.0 * n / 3.0

    def f(x, y):
        return s * np.clip(x + shift - x0, 0.0, x1 - x0) + t * y

    def g(x, y):
        inside = (x + shift > x0) & (x + shift < x1)
        return np.where(inside, s, 0.0), np.full_like(y, t)

    return _height_field(n, rng, thickness, bit_depth, f, g, relief)


def wavy(n, rng, thickness=0.3, bit_depth=8, shift=0.0, relief=2.0) -> PointCloud:
    amp = n / 10.0 * (0.8 + 0.4 * rng.random())
    w = 2.0 * np.pi / (n / 2.0)

    def f(x, y):
        return amp + amp * np.sin(w * (x + shift)) * np.cos(w * y)

    def g(x, y):
        return (amp * w * np.cos(w * (x + shift)) * np.cos(w * y),
                -amp * w * np.sin(w * (x + shift)) * np.sin(w * y))

    return _height_field(n, rng, thickness, bit_depth, f, g, relief)


# (depth axis, u axis, v axis, outward sign) per face
_FACES = ((0, 1, 2, 1), (0, 1, 2, -1), (1, 0, 2, 1), (1, 0, 2, -1), (2, 0, 1, 1), (2, 0, 1, -1))


def cube(n, rng, thickness=0.3, bit_depth=8, shift=0.0, relief=3.0) -> PointCloud:
    """Closed box of side ``n // 2`` whose faces carry outward relief."""
    side = max(n // 2, 4)
    # relief spans [0, 2 * relief] plus one stacked voxel
    margin = 2 * int(np.ceil(relief)) + 3
    all_pts, all_nrm = [], []
    for d_ax, u_ax, v_ax, sign in _FACES:
        rel = Relief(rng, relief)
        # relief >= 0 so faces only bulge outwards
        pts, nrm = _sheet(lambda x, y: rel(x, y) + relief, rel.grad, side, side, rng, thickness)
        p3 = np.empty_like(pts)
        n3 = np.empty_like(nrm)
        p3[:, u_ax] = pts[:, 0] + margin
        p3[:, v_ax] = pts[:, 1] + margin
        n3[:, u_ax] = nrm[:, 0]
        n3[:, v_ax] = nrm[:, 1]
        if sign > 0:
            p3[:, d_ax] = margin + side - 1 + pts[:, 2]
            n3[:, d_ax] = nrm[:, 2]
        else:
            p3[:, d_ax] = margin - pts[:, 2]
            n3[:, d_ax] = -nrm[:, 2]
        all_pts.append(p3)
        all_nrm.append(n3)
    pts = np.concatenate(all_pts)
    pts[:, 0] += int(round(shift))
    return _finish(pts, np.concatenate(all_nrm), bit_depth)


_GENERATORS = {"plane": plane, "ramp": ramp, "cube": cube, "wavy": wavy}


def synthesize(kind: str, size: int = 64, seed: int = 0, bit_depth: int = 8,
               thickness: float | None = None) -> tuple[PointCloud, PointCloud]:
    """Frames t and t+1 of a synthetic sequence (t+1 is shifted by one voxel)."""
    if kind not in _GENERATORS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {KINDS}")
    gen = _GENERATORS[kind]
    kw = {} if thickness is None else {"thickness": thickness}
    frames = []
    for shift in (0.0, 1.0):
        rng = np.random.default_rng(seed)
        frames.append(gen(size, rng, bit_depth=bit_depth, shift=shift, **kw))
    return frames[0], frames[1]
