"""Acceptance criteria 1-10; each prints a PASS/FAIL line in the terminal summary."""

import time
from fractions import Fraction

import numpy as np
import pytest

from pcgs.codec import CodecConfig, decode, encode_frames
from pcgs.codec.entropy import entropy_decode, entropy_encode
from pcgs.codec.layers import merge_prediction
from pcgs.epm import block_gradient, block_gradient_sums, ctu_normal, plane_fit_lsq, project_distortion
from pcgs.experiments import bd_table, sweep_many
from pcgs.metrics import PSNR_CAP, RdPoint, bd_rate, d1_error, d2_error
from pcgs.pipeline import encode_cloud, project_cloud
from pcgs.pointcloud import PointCloud
from pcgs.projection import reconstruct_cloud
from pcgs.synth import KINDS, synthesize

YS, XS = np.mgrid[1:5, 1:5]
GRID_XY = np.stack([XS.ravel(), YS.ravel()], axis=1)

ABLATION_QPS = (24, 28, 32, 36, 40)
CTC_QPS = (32, 28, 24, 20, 16)
FRAME_WIDTH = 128


# 1 ---------------------------------------------------------------------------

HEADLINE = {
    "overall (epm+om), D2": -9.84,
    "epm only, D2": -6.19,
    "om merge, D1/D2": (-4.61, -3.34),
    "non-om merge, D1/D2": (-1.01, -0.23),
}


@pytest.mark.acceptance(1, "published BD-rates not reproducible at desk scale; criteria 2-10 substitute")
def test_c1_reproducibility_statement(criterion_detail):
    # The published averages come from a reference encoder on licensed
    # sequences; this package reports directional results on synthetic
    # clouds instead (criterion 4).
    assert all(v for v in HEADLINE.values())
    criterion_detail("headline numbers recorded, not reproduced")


# 2 ---------------------------------------------------------------------------


def _rational_lsq(block):
    """Exact (U, V) of z = U x + V y + W over the 4x4 grid, via Fractions."""
    pts = [(int(x), int(y), int(z)) for (x, y), z in zip(GRID_XY, np.asarray(block).ravel())]
    rows = [[Fraction(x), Fraction(y), Fraction(1)] for x, y, _ in pts]
    a = [[sum(r[i] * r[j] for r in rows) for j in range(3)] for i in range(3)]
    b = [sum(r[i] * z for r, (_, _, z) in zip(rows, pts)) for i in range(3)]
    # Gauss-Jordan on the 3x3 normal equations
    m = [a[i] + [b[i]] for i in range(3)]
    for c in range(3):
        p = next(r for r in range(c, 3) if m[r][c] != 0)
        m[c], m[p] = m[p], m[c]
        m[c] = [v / m[c][c] for v in m[c]]
        for r in range(3):
            if r != c and m[r][c] != 0:
                m[r] = [vr - m[r][c] * vc for vr, vc in zip(m[r], m[c])]
    return m[0][3], m[1][3], m[2][3]


@pytest.mark.acceptance(2, "4x4 gradient filters agree with the least-squares plane fit")
def test_c2_filter_oracle(criterion_detail):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    blocks = rng.integers(0, 1024, (10_000, 4, 4))
    worst = 0.0
    for blk in blocks:
        fit = plane_fit_lsq(np.column_stack([GRID_XY, blk.ravel()]))
        u, v = block_gradient(blk)
        worst = max(worst, abs(u - fit.U), abs(v - fit.V))
    assert worst <= 1e-9

    for _ in range(100):
        cu, cv, cw = (int(c) for c in rng.integers(-60, 61, 3))
        blk = cu * XS + cv * YS + cw + 400
        su, sv = block_gradient_sums(blk)
        ru, rv, rw = _rational_lsq(blk)
        assert (Fraction(su, 40), Fraction(sv, 40)) == (ru, rv) == (cu, cv)
        assert rw == cw + 400
        assert block_gradient(blk) == (float(cu), float(cv))
    elapsed = time.perf_counter() - t0
    criterion_detail(f"max |diff| {worst:.1e} over 10000 blocks, 100 exact planes, {elapsed:.2f}s")
    assert elapsed < 5.0


# 3 ---------------------------------------------------------------------------


@pytest.mark.acceptance(3, "om refinement gain >= (1-2a)*M_occ, strictly positive for a < 1/2")
def test_c3_refinement_regime(criterion_detail):
    rng = np.random.default_rng(3)
    alphas = (0.0, 0.25, 0.4, 0.5, 0.6, 1.0)
    t0 = time.perf_counter()
    trials = 0
    min_margin = np.inf
    for i in range(10_000):
        alpha = alphas[i % len(alphas)]
        n = int(rng.choice([4, 8, 16]))
        near = rng.integers(0, 1000, (n, n))
        occ = rng.random((n, n)) < rng.uniform(0.2, 1.0)
        occ.flat[rng.integers(n * n)] = True
        m_occ = int(occ.sum())
        n_agree = int(round(alpha * m_occ))
        occ_idx = rng.permutation(np.flatnonzero(occ))
        disagree = occ_idx[n_agree:]
        far = near.copy()
        far.flat[disagree] += rng.integers(1, 5, len(disagree))  # d >= 1, within tau
        a_eff = n_agree / m_occ
        base = int(((far - merge_prediction(near, occ, "baseline", 10)) ** 2).sum())
        om = int(((far - merge_prediction(near, occ, "om", 10)) ** 2).sum())
        gain = base - om
        bound = (1 - 2 * a_eff) * m_occ
        assert gain >= bound - 1e-9, (alpha, gain, bound)
        if a_eff < 0.5:
            assert gain > 0
        min_margin = min(min_margin, gain - bound)
        trials += 1
    elapsed = time.perf_counter() - t0
    criterion_detail(f"{trials} trials, min(gain - bound) = {min_margin:g}, {elapsed:.2f}s")
    assert elapsed < 5.0


# 4 ---------------------------------------------------------------------------


def _ablation_clouds(seed=7):
    # sizes chosen so every packed frame stays within 128 x 128
    return {k: synthesize(k, 48 if k == "cube" else 72, seed, 8)[0] for k in KINDS}


@pytest.fixture(scope="module")
def ablation():
    t0 = time.perf_counter()
    rows = sweep_many(_ablation_clouds(), ABLATION_QPS, ("baseline", "om", "epm+om"), FRAME_WIDTH, 4)
    return rows, time.perf_counter() - t0


@pytest.mark.acceptance(4, "directional ablation: epm+om < 0 on >= 3/4, om <= 0 on wavy and ramp")
def test_c4_directional_ablation(ablation, criterion_detail):
    rows, elapsed = ablation
    frames = {r.result.stats["frame"] for r in rows}
    table = bd_table(rows)
    combo = {seq: table[(seq, "epm+om")]["d2"] for seq in KINDS}
    om = {seq: table[(seq, "om")]["d2"] for seq in KINDS}
    criterion_detail("epm+om D2 " + ", ".join(f"{k} {v:+.2f}%" for k, v in sorted(combo.items())))
    criterion_detail("om D2 " + ", ".join(f"{k} {v:+.2f}%" for k, v in sorted(om.items())))
    criterion_detail(f"frames {sorted(frames)}, {elapsed:.1f}s")
    assert all(max(int(d) for d in f.split("x")) <= 128 for f in frames)
    assert sum(v is not None and v < 0 for v in combo.values()) >= 3
    assert om["wavy"] is not None and om["wavy"] <= 0
    assert om["ramp"] is not None and om["ramp"] <= 0
    assert elapsed < 120.0


# 5 ---------------------------------------------------------------------------


@pytest.mark.acceptance(5, "EPM leaves near-layer streams bit-identical")
def test_c5_epm_scope(criterion_detail):
    checked = 0
    for kind, cloud in _ablation_clouds().items():
        frames, _ = project_cloud(cloud, 4, FRAME_WIDTH)
        for qp in ABLATION_QPS:
            base = encode_frames(frames, CodecConfig(qp=qp, bit_depth=8))
            epm = encode_frames(frames, CodecConfig(qp=qp, bit_depth=8, epm_rdo=True))
            assert epm.near.bits == base.near.bits
            assert np.array_equal(epm.near.recon, base.near.recon)
            checked += 1
    criterion_detail(f"{checked} near streams compared")


# 6 ---------------------------------------------------------------------------


def _brute(test, ref, normals):
    t = test.astype(np.float64)
    r = ref.astype(np.float64)
    d2 = ((t[:, None, :] - r[None, :, :]) ** 2).sum(axis=2)
    nn = d2.argmin(axis=1)  # first minimum = lowest index
    diff = t - r[nn]
    e1 = float((diff ** 2).sum(axis=1).mean())
    e2 = float((np.einsum("ij,ij->i", diff, normals[nn]) ** 2).mean())
    return e1, e2


@pytest.mark.acceptance(6, "D1/D2 equal an O(N^2) brute-force oracle; D2 <= D1")
def test_c6_metric_oracle(criterion_detail):
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    for i in range(50):
        na, nb = rng.integers(1, 2001, 2)
        span = int(rng.choice([8, 32, 1024]))  # small spans force many distance ties
        a = rng.integers(0, span, (na, 3))
        b = rng.integers(0, span, (nb, 3))
        nrm = rng.normal(size=(nb, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        ref = PointCloud(b, nrm)
        e1, e2 = _brute(a, b, nrm)
        got1 = d1_error(PointCloud(a), ref)
        got2 = d2_error(PointCloud(a), ref)
        assert got1 == e1, i
        assert got2 == e2, i
        assert got2 <= got1
    elapsed = time.perf_counter() - t0
    criterion_detail(f"50 pairs exact, {elapsed:.1f}s")
    assert elapsed < 30.0


# 7 ---------------------------------------------------------------------------

FLAG_SETS = [
    {},
    {"epm_rdo": True},
    {"om_merge": True},
    {"non_om_merge": True},
    {"epm_rdo": True, "om_merge": True},
    {"epm_rdo": True, "non_om_merge": True},
]


@pytest.mark.acceptance(7, "decoder recon bit-exact across flags x 5 QPs; entropy round trip on 1e6 symbols")
def test_c7_codec_integrity(criterion_detail):
    streams = 0
    for kind in KINDS:
        cloud, _ = synthesize(kind, 48, seed=11, bit_depth=8)
        frames, _ = project_cloud(cloud, 4, 64)
        for flags in FLAG_SETS:
            for qp in CTC_QPS:
                enc = encode_frames(frames, CodecConfig(qp=qp, bit_depth=8, **flags))
                dec, _ = decode(enc.data)
                assert np.array_equal(dec.near, enc.recon.near)
                assert np.array_equal(dec.far, enc.recon.far)
                assert np.array_equal(dec.occupancy, enc.recon.occupancy)
                streams += 1

    rng = np.random.default_rng(7)
    symbols = np.concatenate([
        rng.integers(-4, 5, 700_000),
        rng.integers(-70_000, 70_001, 290_000),
        rng.integers(-2**40, 2**40, 10_000),
    ])
    rng.shuffle(symbols)
    values = symbols.tolist()
    bits = entropy_encode(values)
    assert entropy_decode(bits) == values
    criterion_detail(f"{streams} streams bit-exact; {len(values)} symbols, {len(bits)} bits round-tripped")


# 8 ---------------------------------------------------------------------------


@pytest.mark.acceptance(8, "BD-rate calibration: 0%, -10%, +10%")
def test_c8_bd_calibration(criterion_detail):
    rates = [850.0, 1500.0, 2700.0, 4600.0, 8100.0]
    psnr = [31.2, 34.0, 36.9, 39.1, 41.8]
    anchor = [RdPoint(r, r, p, p) for r, p in zip(rates, psnr)]

    def scaled(f):
        return [RdPoint(r * f, r * f, p, p) for r, p in zip(rates, psnr)]

    same = bd_rate(anchor, anchor)
    down = bd_rate(anchor, scaled(0.9))
    up = bd_rate(anchor, scaled(1.1))
    criterion_detail(f"{same:.6f}%, {down:.6f}%, {up:.6f}%")
    assert abs(same) <= 1e-6
    assert abs(down + 10.0) <= 1e-6
    assert abs(up - 10.0) <= 1e-6


# 9 ---------------------------------------------------------------------------


def _two_sheet_cloud(n=40, gap=2):
    ys, xs = np.mgrid[0:n, 0:n]
    h = np.floor(0.3 * xs + 0.2 * ys + 0.5).astype(np.int64).ravel() + 5
    lower = np.stack([xs.ravel(), ys.ravel(), h], axis=1)
    upper = lower + [0, 0, gap]
    pts = np.concatenate([lower, upper])
    nrm = np.tile([-0.3, -0.2, 1.0], (len(pts), 1))
    return PointCloud(pts, nrm / np.linalg.norm(nrm[0]), 8)


@pytest.mark.acceptance(9, "lossless QP: D1 = D2 = 0 and no missed points")
def test_c9_lossless(criterion_detail):
    # every pixel receives exactly two points, one per sheet, within tau
    for gap in (1, 2, 4):
        cloud = _two_sheet_cloud(gap=gap)
        frames, missed = project_cloud(cloud, 4, FRAME_WIDTH)
        res = encode_cloud(cloud, CodecConfig(qp=0, bit_depth=8), FRAME_WIDTH, frames=(frames, missed))
        assert missed == 0
        assert {tuple(p) for p in res.recon.points.tolist()} == {tuple(p) for p in cloud.points.tolist()}
        assert res.error.symmetric_c2c == 0.0 and res.error.symmetric_c2p == 0.0
        assert res.rd.d1_psnr == res.rd.d2_psnr == PSNR_CAP
        dec = reconstruct_cloud(decode(res.data)[0])
        assert np.array_equal(dec.points, res.recon.points)
        criterion_detail(f"gap {gap}: {len(cloud)} pts exact")


# 10 --------------------------------------------------------------------------


@pytest.mark.acceptance(10, "point-to-plane SSE of noisy planar patches equals SSE*cos^2(theta)")
def test_c10_error_projection(criterion_detail):
    rng = np.random.default_rng(10)
    worst = 0.0
    for deg in (0, 30, 45, 60):
        th = np.radians(deg)
        ys, xs = np.mgrid[0:32, 0:32].astype(np.float64)
        true_depth = np.tan(th) * xs + 0.0 * ys + 3.0
        noise = rng.choice([-1.0, 1.0], xs.shape)
        recon = true_depth + noise
        pts = np.stack([xs.ravel(), ys.ravel(), recon.ravel()], axis=1)
        normal = np.array([-np.sin(th), 0.0, np.cos(th)])
        foot = (pts - [0.0, 0.0, 3.0]) @ normal  # signed distance to the true plane
        direct = float((foot ** 2).sum())
        sse = float((noise ** 2).sum())
        predicted = project_distortion(sse, np.cos(th) ** 2)
        rel = abs(direct - predicted) / predicted
        worst = max(worst, rel)
        assert rel <= 1e-6, deg
    # the filter path recovers cos^2 exactly where the surface slope is integral
    xs64 = np.tile(np.arange(64), (64, 1))
    assert ctu_normal(3 + 0 * xs64).cos2_theta == 1.0
    assert ctu_normal(xs64).cos2_theta == 0.5 == pytest.approx(np.cos(np.radians(45)) ** 2)
    criterion_detail(f"max relative error {worst:.1e}")
