"""QP sweeps and ablation runs over codec flavors."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .codec import CodecConfig
from .metrics import MetricError, RdPoint, bd_rate
from .pipeline import EncodeResult, encode_cloud, project_cloud
from .pointcloud import PointCloud

# Geometry QPs of the five common-test-condition rate points, coarse to fine.
CTC_GEOMETRY_QPS = (32, 28, 24, 20, 16)

FLAVOR_FLAGS = {
    "baseline": {},
    "epm": {"epm_rdo": True},
    "om": {"om_merge": True},
    "non_om": {"non_om_merge": True},
    "epm+om": {"epm_rdo": True, "om_merge": True},
}


def flavor_config(flavor: str, qp: int, **overrides) -> CodecConfig:
    try:
        flags = FLAVOR_FLAGS[flavor]
    except KeyError:
        raise ValueError(f"unknown flavor {flavor!r}; choose from {sorted(FLAVOR_FLAGS)}") from None
    return CodecConfig(qp=qp, **flags, **overrides)


@dataclass
class SweepRow:
    seq: str
    flavor: str
    qp: int
    result: EncodeResult

    @property
    def rd(self) -> RdPoint:
        return self.result.rd


def sweep(seq: str, cloud: PointCloud, qps, flavors, frame_width: int, tau: int = 4,
          **overrides) -> list[SweepRow]:
    """Encode one prepared cloud at every (flavor, qp); projection runs once."""
    frames = project_cloud(cloud, tau, frame_width)
    rows = []
    for flavor in flavors:
        for qp in qps:
            cfg = flavor_config(flavor, qp, tau=tau, bit_depth=cloud.bit_depth, **overrides)
            rows.append(SweepRow(seq, flavor, qp, encode_cloud(cloud, cfg, frame_width, frames=frames)))
    return rows


def _sweep_job(args):
    return sweep(*args[:-1], **args[-1])


def sweep_many(jobs: dict[str, PointCloud], qps, flavors, frame_width: int, tau: int = 4,
               workers: int = 1, **overrides) -> list[SweepRow]:
    """Sweeps over several sequences, optionally in a process pool; rows sorted by key."""
    args = [(seq, cloud, tuple(qps), tuple(flavors), frame_width, tau, overrides)
            for seq, cloud in sorted(jobs.items())]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_sweep_job, args))
    else:
        chunks = [_sweep_job(a) for a in args]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r.seq, r.flavor, r.qp))
    return rows


def curves(rows: list[SweepRow]) -> dict[tuple[str, str], list[RdPoint]]:
    out: dict[tuple[str, str], list[RdPoint]] = {}
    for r in rows:
        out.setdefault((r.seq, r.flavor), []).append(r.rd)
    return out


def bd_table(rows: list[SweepRow], anchor: str = "baseline") -> dict[tuple[str, str], dict[str, float | None]]:
    """BD-rate of each flavor against ``anchor`` per sequence, for D1 and D2.

    Entries are ``None`` when the curves do not admit a BD computation.
    """
    cv = curves(rows)
    table = {}
    for (seq, flavor), pts in sorted(cv.items()):
        if flavor == anchor:
            continue
        ref = cv.get((seq, anchor))
        entry = {}
        for metric in ("d1", "d2"):
            try:
                entry[metric] = bd_rate(ref, pts, metric) if ref else None
            except MetricError:
                entry[metric] = None
        table[(seq, flavor)] = entry
    return table
