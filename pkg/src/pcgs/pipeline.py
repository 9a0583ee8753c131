"""Cloud-level encode/decode built from the projection and codec stages."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .codec import CodecConfig, EncodedFrames, decode, encode_frames
from .metrics import RdPoint, geom_psnr, geometry_error, GeomError
from .pointcloud import PointCloud, estimate_normals, voxelize
from .projection import (
    DEFAULT_FRAME_WIDTH,
    MIN_PATCH_SIZE,
    GeometryFramePair,
    pack_patches,
    pad_frames,
    project_patch,
    reconstruct_cloud,
    segment_patches,
)

DEFAULT_K = 16


def as_voxelized(cloud: PointCloud, bit_depth: int) -> PointCloud:
    """Adopt integral in-range coordinates as-is; rescale anything else."""
    if cloud.bit_depth == bit_depth:
        return cloud
    pts = np.asarray(cloud.points)
    if len(pts) and np.all(pts == np.round(pts)) and pts.min() >= 0 and pts.max() < (1 << bit_depth):
        return voxelize(PointCloud(pts.astype(np.int64), cloud.normals, bit_depth), bit_depth)
    return voxelize(cloud, bit_depth)


def prepare_cloud(cloud: PointCloud, bit_depth: int, k: int = DEFAULT_K) -> PointCloud:
    """Voxelize (see :func:`as_voxelized`) and make sure normals exist."""
    cloud = as_voxelized(cloud, bit_depth)
    if not cloud.has_normals:
        cloud = estimate_normals(cloud, min(k, len(cloud)))
    return cloud


def project_cloud(cloud: PointCloud, tau: int, frame_width: int = DEFAULT_FRAME_WIDTH,
                  min_patch_size: int = MIN_PATCH_SIZE) -> tuple[GeometryFramePair, int]:
    """Segment, project, pack and pad. Returns the padded frames and the missed-point count."""
    groups = segment_patches(cloud, min_patch_size)
    patches = [project_patch(cloud, idx, axis, tau) for idx, axis in groups]
    frames = pack_patches(patches, frame_width, cloud.bit_depth)
    return pad_frames(frames), sum(p.missed for p in patches)


@dataclass
class EncodeResult:
    encoded: EncodedFrames
    recon: PointCloud
    error: GeomError
    rd: RdPoint
    missed: int
    config: CodecConfig
    stats: dict = field(default_factory=dict)

    @property
    def data(self) -> bytes:
        return self.encoded.data


def evaluate(recon: PointCloud, original: PointCloud, bits_total: int, bits_geometry: int,
             missed: int = 0, peak_factor: float = 3.0) -> tuple[GeomError, RdPoint]:
    err = geometry_error(recon, original)
    b = original.bit_depth
    rd = RdPoint(
        bits_total=bits_total,
        bits_geometry=bits_geometry,
        d1_psnr=geom_psnr(err.symmetric_c2c, b, peak_factor),
        d2_psnr=geom_psnr(err.symmetric_c2p, b, peak_factor),
        points_in=len(original),
        points_out=len(recon),
        points_missed=missed,
    )
    return err, rd


def encode_cloud(cloud: PointCloud, config: CodecConfig, frame_width: int = DEFAULT_FRAME_WIDTH,
                 frames: tuple[GeometryFramePair, int] | None = None) -> EncodeResult:
    """Full encode of a prepared (voxelized, with normals) cloud.

    ``frames`` may carry a precomputed :func:`project_cloud` result so that QP
    sweeps project only once.
    """
    if cloud.bit_depth != config.bit_depth or not cloud.has_normals:
        raise ValueError("cloud must be voxelized at the codec bit depth and carry normals")
    padded, missed = frames if frames is not None else project_cloud(cloud, config.tau, frame_width)
    enc = encode_frames(padded, config)
    recon = reconstruct_cloud(enc.recon, tau=config.tau)
    err, rd = evaluate(recon, cloud, enc.bits_total, enc.bits_geometry, missed)
    counts = Counter(enc.near.mode_counts()) + Counter(
        {f"far_{m}": c for m, c in enc.far.mode_counts().items()})
    stats = {
        "modes": dict(sorted(counts.items())),
        "epm_scales": enc.far.epm_scales,
        "frame": f"{padded.shape[1]}x{padded.shape[0]}",
        "patches": len(padded.patches),
    }
    return EncodeResult(enc, recon, err, rd, missed, config, stats)


def decode_cloud(data: bytes) -> PointCloud:
    frames, header = decode(data)
    return reconstruct_cloud(frames, tau=header.config.tau)
