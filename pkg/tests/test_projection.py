import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from pcgs.pipeline import project_cloud
from pcgs.pointcloud import PointCloud
from pcgs.projection import (
    AXIS_VECTORS,
    CorruptPatchTable,
    GeometryFramePair,
    Patch,
    assign_axes,
    pack_patches,
    pad_frames,
    project_patch,
    reconstruct_cloud,
    segment_patches,
    write_pbm,
    write_pgm,
)
from pcgs.synth import synthesize

from conftest import grid_plane


def _square(x0, y0, n, z):
    ys, xs = np.mgrid[y0:y0 + n, x0:x0 + n]
    return np.stack([xs.ravel(), ys.ravel(), np.full(n * n, z)], axis=1)


def _hollow_cube(side=6, off=2):
    r = np.arange(off, off + side)
    g = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    lo, hi = off, off + side - 1
    on = (g == lo) | (g == hi)
    g = g[on.any(axis=1)]
    nrm = ((g == hi).astype(float) - (g == lo).astype(float))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return PointCloud(g.astype(np.int64), nrm, 8)


def test_assign_axes_ties_follow_axis_order():
    n = np.array([[1, 1, 0], [0, -1, -1], [-1, 0, 1]], dtype=float) / np.sqrt(2)
    assert assign_axes(n).tolist() == [0, 3, 1]
    assert assign_axes(AXIS_VECTORS.astype(float)).tolist() == list(range(6))


def test_flat_square_single_patch():
    groups = segment_patches(grid_plane(8))
    assert len(groups) == 1
    assert groups[0][1] == 4
    assert len(groups[0][0]) == 64


def test_two_separated_squares():
    pts = np.concatenate([_square(0, 0, 5, 3), _square(8, 0, 5, 3)])
    c = PointCloud(pts, np.tile([0.0, 0, 1], (len(pts), 1)), 8)
    groups = segment_patches(c)
    assert len(groups) == 2
    assert all(axis == 4 for _, axis in groups)
    # components oracle: 26-connectivity via Chebyshev distance 1
    adj = cdist(pts, pts, "chebyshev") <= 1
    ncomp, _ = connected_components(adj)
    assert ncomp == 2


def test_cube_six_patches():
    groups = segment_patches(_hollow_cube())
    assert sorted(axis for _, axis in groups) == [0, 1, 2, 3, 4, 5]


def test_small_component_merged():
    pts = np.concatenate([_square(0, 0, 5, 3), [[9, 9, 3]]])
    c = PointCloud(pts, np.tile([0.0, 0, 1], (len(pts), 1)), 8)
    groups = segment_patches(c, min_patch_size=4)
    assert len(groups) == 1 and len(groups[0][0]) == 26


def test_every_point_assigned_once():
    f0, _ = synthesize("cube", 32, seed=3)
    groups = segment_patches(f0)
    idx = np.concatenate([g for g, _ in groups])
    assert np.array_equal(np.sort(idx), np.arange(len(f0)))


def _column(depths, axis=4):
    pts = np.array([[0, 0, d] for d in depths])
    return PointCloud(pts, None, 8), np.arange(len(pts))


def test_project_thickness_window():
    c, idx = _column([3, 5, 9])
    p = project_patch(c, idx, 4, tau=4)
    # depths are relative to the patch origin (min z = 3)
    assert p.near_depth[0, 0] == 0 and p.far_depth[0, 0] == 2
    assert p.missed == 1
    assert p.origin3d == (0, 0, 3)


def test_project_absolute_depths():
    pts = np.array([[0, 0, 3], [0, 0, 5], [0, 0, 9], [1, 0, 0]])
    p = project_patch(PointCloud(pts, None, 8), np.arange(4), 4, tau=4)
    assert p.near_depth[0, 0] == 3 and p.far_depth[0, 0] == 5 and p.missed == 1
    assert p.near_depth[0, 1] == p.far_depth[0, 1] == 0


def test_project_single_point():
    pts = np.array([[0, 0, 7], [1, 0, 0]])
    p = project_patch(PointCloud(pts, None, 8), np.arange(2), 4, tau=4)
    assert p.near_depth[0, 0] == p.far_depth[0, 0] == 7


def test_project_negative_axis():
    pts = np.array([[0, 0, 10], [0, 0, 8], [1, 0, 12]])
    p = project_patch(PointCloud(pts, None, 8), np.arange(3), 5, tau=4)
    assert p.origin3d[2] == 12
    assert p.near_depth[0, 0] == 2 and p.far_depth[0, 0] == 4


def _patch(w, h):
    occ = np.ones((h, w), dtype=bool)
    d = np.zeros((h, w), dtype=np.int64)
    return Patch(4, (0, 0, 0), w, h, near_depth=d, far_depth=d.copy(), occupancy=occ)


def test_pack_single():
    f = pack_patches([_patch(16, 16)], 64)
    assert f.patches[0].placement2d == (0, 0)
    assert f.shape == (64, 64)


def test_pack_two():
    f = pack_patches([_patch(16, 16), _patch(16, 16)], 64)
    assert [p.placement2d for p in f.patches] == [(0, 0), (16, 0)]


def test_pack_too_wide():
    with pytest.raises(ValueError):
        pack_patches([_patch(100, 4)], 64)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 60), st.integers(1, 60)), min_size=1, max_size=12))
def test_pack_disjoint(dims):
    f = pack_patches([_patch(w, h) for w, h in dims], 64)
    cover = np.zeros(f.shape, dtype=int)
    for p in f.patches:
        u0, v0 = p.placement2d
        assert u0 % 8 == 0 and v0 % 8 == 0
        rows, cols = p.footprint()
        cover[rows, cols] += 1
    assert cover.max() == 1
    assert f.shape[0] % 64 == 0


def _frames(near, far, occ, b=10):
    return GeometryFramePair(np.array(near), np.array(far), np.array(occ, dtype=bool), [], b)


def test_pad_full_frame_unchanged(rng):
    near = rng.integers(0, 100, (8, 8))
    far = near + 1
    out = pad_frames(_frames(near, far, np.ones((8, 8))))
    assert np.array_equal(out.near, near) and np.array_equal(out.far, far)


def test_pad_nearest_in_block():
    occ = np.ones((4, 4), dtype=bool)
    occ[0, 1] = False
    near = np.full((4, 4), 9)
    near[0, 1] = 0
    far = near + 2
    far[0, 1] = 0
    out = pad_frames(_frames(near, far, occ))
    assert out.near[0, 1] == 9 and out.far[0, 1] == 9


def test_pad_empty_frame():
    z = np.zeros((8, 8), dtype=np.int64)
    out = pad_frames(_frames(z, z, z, b=8))
    assert (out.near == 128).all() and (out.far == 128).all()


def test_pad_copies_from_above_then_left():
    occ = np.zeros((8, 8), dtype=bool)
    occ[:4, :4] = True
    near = np.zeros((8, 8), dtype=np.int64)
    near[:4, :4] = np.arange(16).reshape(4, 4)
    out = pad_frames(_frames(near, near, occ))
    # block right of the occupied one copies its last column
    assert out.near[0:4, 4].tolist() == [3, 7, 11, 15]
    # block below copies the last row above it
    assert out.near[4, 0:4].tolist() == [12, 13, 14, 15]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_pad_unoccupied_equal(seed):
    r = np.random.default_rng(seed)
    occ = r.random((16, 16)) < 0.4
    near = r.integers(0, 50, (16, 16))
    far = near + r.integers(0, 5, (16, 16))
    out = pad_frames(_frames(near * occ, far * occ, occ))
    assert np.array_equal(out.near[~occ], out.far[~occ])
    assert np.array_equal(out.near[occ], near[occ]) and np.array_equal(out.far[occ], far[occ])


def _frame_pair_for(points, tau=4):
    cloud = PointCloud(np.array(points), None, 8)
    p = project_patch(cloud, np.arange(len(points)), 4, tau)
    return pad_frames(pack_patches([p], 64, 8))


def test_reconstruct_near_far():
    f = _frame_pair_for([[0, 0, 3], [0, 0, 5]])
    rec = reconstruct_cloud(f)
    assert sorted(rec.points[:, 2].tolist()) == [3, 5]


def test_reconstruct_single():
    rec = reconstruct_cloud(_frame_pair_for([[0, 0, 7]]))
    assert rec.points.tolist() == [[0, 0, 7]]


def test_reconstruct_ignores_unoccupied():
    f = _frame_pair_for([[0, 0, 7]])
    f.near[5, 5] = 40
    assert len(reconstruct_cloud(f)) == 1


def test_reconstruct_corrupt_table():
    f = _frame_pair_for([[0, 0, 7]])
    f.occupancy[40, 40] = True
    with pytest.raises(CorruptPatchTable):
        reconstruct_cloud(f)


@pytest.mark.parametrize("kind", ["plane", "cube", "wavy"])
def test_round_trip_subset_and_thickness(kind):
    cloud, _ = synthesize(kind, 32, seed=5)
    frames, missed = project_cloud(cloud, 4, 128)
    occ = frames.occupancy
    assert (frames.near[occ] <= frames.far[occ]).all()
    assert (frames.far[occ] <= frames.near[occ] + 4).all()
    rec = reconstruct_cloud(frames)
    orig = {tuple(p) for p in cloud.points.tolist()}
    got = {tuple(p) for p in rec.points.tolist()}
    assert got <= orig


def test_round_trip_exact_when_two_per_pixel():
    pts = np.concatenate([_square(0, 0, 6, 10), _square(0, 0, 6, 12)])
    c = PointCloud(pts, np.tile([0.0, 0, 1], (len(pts), 1)), 8)
    frames, missed = project_cloud(c, 4, 64)
    assert missed == 0
    rec = reconstruct_cloud(frames)
    assert {tuple(p) for p in rec.points.tolist()} == {tuple(p) for p in pts.tolist()}


def test_debug_dumps(tmp_path):
    f = _frame_pair_for([[0, 0, 7]])
    write_pgm(tmp_path / "n.pgm", f.near)
    write_pbm(tmp_path / "o.pbm", f.occupancy)
    assert (tmp_path / "n.pgm").read_bytes().startswith(b"P5\n64 64\n65535\n")
    assert len((tmp_path / "n.pgm").read_bytes()) == len(b"P5\n64 64\n65535\n") + 64 * 64 * 2
    assert (tmp_path / "o.pbm").read_bytes().startswith(b"P4\n64 64\n")
