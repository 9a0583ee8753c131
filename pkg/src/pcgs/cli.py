"""Batch command-line front end.

Exit codes: 0 success, 1 usage, 2 I/O, 3 corrupt bitstream, 4 metric precondition.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .codec import BitstreamError, decode
from .codec.config import CodecConfig
from .experiments import CTC_GEOMETRY_QPS, FLAVOR_FLAGS, bd_table, curves, flavor_config, sweep_many
from .metrics import MetricError, RdPoint, bd_rate
from .pipeline import DEFAULT_K, as_voxelized, evaluate, prepare_cloud
from .pointcloud import PlyError, load_ply, save_ply
from .projection import DEFAULT_FRAME_WIDTH, reconstruct_cloud
from .synth import KINDS, synthesize

log = logging.getLogger("pcgs")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_BITSTREAM, EXIT_METRIC = 0, 1, 2, 3, 4

METRIC_FIELDS = ["seq", "qp", "bits_geometry", "d1_psnr", "d2_psnr", "points_missed"]
LOG_FIELDS = ["seq", "flavor", "qp", "bits_total", "bits_geometry", "d1_psnr", "d2_psnr",
              "points_in", "points_out", "points_missed", "frame", "patches", "modes", "epm_scale"]
EPM_BINS = (1.0, 1.25, 1.5, 1.75, 2.0)

# config-file keys -> (argparse dest, type)
CONFIG_KEYS = {
    "qp": ("qp", int),
    "tau": ("tau", int),
    "lambda_c": ("lambda_c", float),
    "min_cu": ("min_cu", int),
    "bit_depth": ("bit_depth", int),
    "frame_width": ("frame_width", int),
    "k": ("k", int),
    "epm_rdo": ("epm_rdo", "bool"),
    "om_merge": ("om_merge", "bool"),
    "non_om_merge": ("non_om_merge", "bool"),
    "epm.max_scale": ("epm_max_scale", float),
    "epm.occupied_blocks_only": ("epm_occupied_blocks_only", "bool"),
    "metrics.peak_factor": ("peak_factor", float),
    "seed": ("seed", int),
    "jobs": ("jobs", int),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        dest, typ = CONFIG_KEYS[key]
        try:
            out[dest] = _parse_bool(value) if typ == "bool" else typ(value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


DEFAULTS = {
    "qp": None, "tau": 4, "lambda_c": 0.57, "min_cu": 8, "bit_depth": 10, "frame_width": DEFAULT_FRAME_WIDTH,
    "k": DEFAULT_K, "epm_rdo": False, "om_merge": False, "non_om_merge": False, "epm_max_scale": 2.0,
    "epm_occupied_blocks_only": True, "peak_factor": 3.0, "seed": 7, "jobs": 1,
}


# desk-scale defaults for the synthetic ablation
ABLATION_DEFAULTS = {"frame_width": 128, "bit_depth": 8}


def _settings(args, defaults: dict | None = None) -> dict:
    """Defaults, then the config file, then explicit command-line flags."""
    merged = {**DEFAULTS, **(defaults or {})}
    if getattr(args, "config", None):
        merged.update(read_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _codec_overrides(s: dict) -> dict:
    return {"lambda_c": s["lambda_c"], "min_cu": s["min_cu"], "epm_max_scale": s["epm_max_scale"],
            "epm_occupied_blocks_only": s["epm_occupied_blocks_only"]}


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in fields})


def _epm_histogram(scales: list[float]) -> str:
    if not scales:
        return ""
    hist = Counter()
    for s in scales:
        for lo, hi in zip(EPM_BINS, EPM_BINS[1:]):
            if s < hi or hi == EPM_BINS[-1]:
                hist[f"{lo:g}-{hi:g}"] += 1
                break
    return ";".join(f"{k}:{v}" for k, v in sorted(hist.items()))


def _flavors(args, s: dict) -> list[str]:
    if args.flavors:
        bad = [f for f in args.flavors if f not in FLAVOR_FLAGS]
        if bad:
            raise UsageError(f"unknown flavors {bad}; choose from {sorted(FLAVOR_FLAGS)}")
        return list(args.flavors)
    if s["om_merge"] and s["non_om_merge"]:
        raise UsageError("--om-merge and --non-om-merge are mutually exclusive")
    name = "+".join(n for n, on in (("epm", s["epm_rdo"]), ("om", s["om_merge"]), ("non_om", s["non_om_merge"]))
                    if on)
    if name and name not in FLAVOR_FLAGS:
        raise UsageError(f"flag combination {name!r} has no ablation entry")
    return [name or "baseline"]


def _load_prepared(path, s: dict):
    return prepare_cloud(load_ply(path), s["bit_depth"], s["k"])


def _metric_row(seq: str, qp: int, rd: RdPoint) -> dict:
    return {"seq": seq, "qp": qp, "bits_geometry": rd.bits_geometry, "d1_psnr": rd.d1_psnr,
            "d2_psnr": rd.d2_psnr, "points_missed": rd.points_missed}


def run_encode(inputs, out: Path, qps, flavors, s: dict) -> list[dict]:
    out.mkdir(parents=True, exist_ok=True)
    clouds = {Path(p).stem: _load_prepared(p, s) for p in inputs}
    rows = sweep_many(clouds, qps, flavors, s["frame_width"], s["tau"], s["jobs"], **_codec_overrides(s))
    log_rows, per_flavor = [], {}
    for r in rows:
        res = r.result
        (out / f"{r.seq}_{r.flavor}_qp{r.qp}.bin").write_bytes(res.data)
        log_rows.append({
            **res.rd.as_dict(), "seq": r.seq, "flavor": r.flavor, "qp": r.qp,
            "frame": res.stats["frame"], "patches": res.stats["patches"],
            "modes": ";".join(f"{k}:{v}" for k, v in res.stats["modes"].items()),
            "epm_scale": _epm_histogram(res.stats["epm_scales"]),
        })
        per_flavor.setdefault(r.flavor, []).append(_metric_row(r.seq, r.qp, res.rd))
    _write_csv(out / "encode_log.csv", LOG_FIELDS, log_rows)
    for flavor, mrows in per_flavor.items():
        _write_csv(out / f"metrics_{flavor}.csv", METRIC_FIELDS, mrows)
    return log_rows


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = KINDS if args.kind == "all" else [args.kind]
    for kind in kinds:
        f0, f1 = synthesize(kind, args.size, args.seed, args.bit_depth)
        for i, cloud in enumerate((f0, f1)):
            path = out / f"{kind}_s{args.seed}_f{i}.ply"
            save_ply(cloud, path)
            print(path)
    return EXIT_OK


def cmd_encode(args) -> int:
    s = _settings(args)
    qps = [s["qp"]] if args.qps is None and s["qp"] is not None else (args.qps or list(CTC_GEOMETRY_QPS))
    for flavor in _flavors(args, s):
        flavor_config(flavor, qps[0], bit_depth=s["bit_depth"])  # validates combination up front
    rows = run_encode(args.inputs, Path(args.out), qps, _flavors(args, s), s)
    for r in rows:
        print(f"{r['seq']:>16} {r['flavor']:>8} qp={r['qp']:<2} bits={r['bits_geometry']:>8} "
              f"D1={r['d1_psnr']:.3f} D2={r['d2_psnr']:.3f}")
    return EXIT_OK


def cmd_decode(args) -> int:
    data = Path(args.bitstream).read_bytes()
    frames, header = decode(data)
    cloud = reconstruct_cloud(frames, tau=header.config.tau)
    save_ply(cloud, args.output)
    print(f"{args.output}: {len(cloud)} points")
    return EXIT_OK


def cmd_eval(args) -> int:
    s = _settings(args)
    ref = _load_prepared(args.reference, s)
    recon = as_voxelized(load_ply(args.reconstruction).with_normals(None), s["bit_depth"])
    bits_total = bits_geometry = 0
    if args.bitstream:
        from .codec.bitstream import read_bitstream

        data = Path(args.bitstream).read_bytes()
        _, _, (_, near, far) = read_bitstream(data)
        bits_total, bits_geometry = 8 * len(data), len(near) + len(far)
    _, rd = evaluate(recon, ref, bits_total, bits_geometry, args.missed, s["peak_factor"])
    row = _metric_row(args.seq or Path(args.reference).stem, args.qp_label, rd)
    w = csv.DictWriter(sys.stdout, fieldnames=METRIC_FIELDS, lineterminator="\n")
    if not args.no_header:
        w.writeheader()
    w.writerow({k: _fmt(row[k]) for k in METRIC_FIELDS})
    return EXIT_OK


def read_metric_csv(path) -> dict[str, list[RdPoint]]:
    out: dict[str, list[RdPoint]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(METRIC_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise MetricError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            bits = int(row["bits_geometry"])
            out.setdefault(row["seq"], []).append(RdPoint(
                bits_total=bits, bits_geometry=bits, d1_psnr=float(row["d1_psnr"]),
                d2_psnr=float(row["d2_psnr"]), points_missed=int(row["points_missed"])))
    return out


def format_bd_table(entries: list[tuple[str, float | None, float | None]], title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'Tested Point Cloud':<20}{'D1':>10}{'D2':>10}")
    lines.append("-" * 40)

    def cell(v):
        return f"{v:>10.2f}" if v is not None else f"{'n/a':>10}"

    vals = {"d1": [], "d2": []}
    for name, d1, d2 in entries:
        lines.append(f"{name:<20}{cell(d1)}{cell(d2)}")
        if d1 is not None:
            vals["d1"].append(d1)
        if d2 is not None:
            vals["d2"].append(d2)
    lines.append("-" * 40)
    avg = {m: (sum(v) / len(v) if v else None) for m, v in vals.items()}
    lines.append(f"{'Average':<20}{cell(avg['d1'])}{cell(avg['d2'])}")
    return "\n".join(lines)


def _bd_or_none(anchor, test, metric):
    try:
        return bd_rate(anchor, test, metric)
    except MetricError as exc:
        log.warning("BD-rate %s: %s", metric, exc)
        return None


def cmd_bdrate(args) -> int:
    anchor = read_metric_csv(args.anchor)
    test = read_metric_csv(args.test)
    common = sorted(set(anchor) & set(test))
    if not common:
        raise MetricError("anchor and test CSVs share no sequences")
    entries = [(seq, _bd_or_none(anchor[seq], test[seq], "d1"), _bd_or_none(anchor[seq], test[seq], "d2"))
               for seq in common]
    print(format_bd_table(entries, "Geom.BD-GeomRate (%)"))
    if args.out:
        _write_csv(Path(args.out), ["seq", "bd_d1", "bd_d2"],
                   [{"seq": n, "bd_d1": "" if a is None else a, "bd_d2": "" if b is None else b}
                    for n, a, b in entries])
    return EXIT_OK


def write_rd_svg(series: dict[str, list[tuple[float, float]]], path, metric: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "pcgs"
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, pts in sorted(series.items()):
        pts = sorted(pts)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.set_xlabel("geometry bits")
    ax.set_ylabel(f"{metric.upper()} PSNR (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_rdcurve(args) -> int:
    series = {}
    for path in args.csvs:
        for seq, pts in read_metric_csv(path).items():
            series[f"{seq} ({Path(path).stem})"] = [(p.bits_geometry, getattr(p, f"{args.metric}_psnr")) for p in pts]
    write_rd_svg(series, args.out, args.metric)
    print(args.out)
    return EXIT_OK


def cmd_ablation(args) -> int:
    """Synthetic sequences -> QP sweep over flavors -> BD tables against baseline."""
    s = _settings(args, ABLATION_DEFAULTS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clouds = {}
    for kind in args.kinds:
        size = args.cube_size if kind == "cube" else args.size
        f0, _ = synthesize(kind, size, s["seed"], s["bit_depth"])
        save_ply(f0, out / f"{kind}.ply")
        clouds[kind] = f0
    qps = args.qps or list(CTC_GEOMETRY_QPS)
    flavors = ["baseline"] + [f for f in args.flavors if f != "baseline"]
    rows = sweep_many(clouds, qps, flavors, s["frame_width"], s["tau"], s["jobs"], **_codec_overrides(s))
    for flavor in flavors:
        _write_csv(out / f"metrics_{flavor}.csv", METRIC_FIELDS,
                   [_metric_row(r.seq, r.qp, r.rd) for r in rows if r.flavor == flavor])
    table = bd_table(rows)
    text = []
    for flavor in flavors[1:]:
        entries = [(seq, table[(seq, flavor)]["d1"], table[(seq, flavor)]["d2"]) for seq in sorted(clouds)]
        text.append(format_bd_table(entries, f"{flavor} vs baseline: Geom.BD-GeomRate (%)"))
    report = "\n\n".join(text)
    (out / "bdrate.txt").write_text(report + "\n")
    _write_csv(out / "bdrate.csv", ["seq", "flavor", "bd_d1", "bd_d2"],
               [{"seq": seq, "flavor": fl, "bd_d1": "" if v["d1"] is None else v["d1"],
                 "bd_d2": "" if v["d2"] is None else v["d2"]} for (seq, fl), v in sorted(table.items())])
    cv = curves(rows)
    for metric in ("d1", "d2"):
        write_rd_svg({f"{seq}/{fl}": [(p.bits_geometry, getattr(p, f"{metric}_psnr")) for p in pts]
                      for (seq, fl), pts in cv.items()}, out / f"rd_{metric}.svg", metric)
    print(report)
    return EXIT_OK


def _add_codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--tau", type=int, help="surface thickness (default 4)")
    p.add_argument("--epm-rdo", action="store_const", const=True, dest="epm_rdo")
    p.add_argument("--om-merge", action="store_const", const=True, dest="om_merge")
    p.add_argument("--non-om-merge", action="store_const", const=True, dest="non_om_merge")
    p.add_argument("--frame-width", type=int, dest="frame_width")
    p.add_argument("--bit-depth", type=int, dest="bit_depth")
    p.add_argument("--lambda-c", type=float, dest="lambda_c")
    p.add_argument("--k", type=int, help="neighbours for normal estimation (default 16)")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcgs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a deterministic synthetic PLY pair")
    p.add_argument("kind", choices=[*KINDS, "all"])
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--bit-depth", type=int, default=8, dest="bit_depth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("encode", help="encode PLY inputs over a QP list and flavor matrix")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--qp", type=int, nargs="+", dest="qps", help="QP list (default CTC geometry QPs)")
    p.add_argument("--flavors", nargs="+", help=f"any of {sorted(FLAVOR_FLAGS)}")
    _add_codec_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream into a PLY")
    p.add_argument("bitstream")
    p.add_argument("output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="D1/D2 PSNR of a reconstruction against its reference")
    p.add_argument("reference")
    p.add_argument("reconstruction")
    p.add_argument("--bitstream", help="fill the bit columns from this stream")
    p.add_argument("--seq")
    p.add_argument("--qp-label", type=int, default=0, dest="qp_label")
    p.add_argument("--missed", type=int, default=0)
    p.add_argument("--peak-factor", type=float, dest="peak_factor")
    p.add_argument("--no-header", action="store_true")
    _add_codec_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bdrate", help="BD-rate table between two metric CSVs")
    p.add_argument("anchor")
    p.add_argument("test")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("rdcurve", help="plot R-D curves from metric CSVs as SVG")
    p.add_argument("csvs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--metric", choices=["d1", "d2"], default="d2")
    p.set_defaults(func=cmd_rdcurve)

    p = sub.add_parser("ablation", help="synthetic ablation: sweep, BD tables and R-D plots")
    p.add_argument("--out", required=True)
    p.add_argument("--kinds", nargs="+", default=list(KINDS), choices=KINDS)
    p.add_argument("--flavors", nargs="+", default=["epm", "om", "non_om", "epm+om"])
    p.add_argument("--qp", type=int, nargs="+", dest="qps")
    p.add_argument("--size", type=int, default=72, help="sheet side in voxels (default 72)")
    p.add_argument("--cube-size", type=int, default=48, dest="cube_size")
    _add_codec_flags(p)
    p.set_defaults(func=cmd_ablation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pcgs: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BitstreamError as exc:
        print(f"pcgs: corrupt bitstream: {exc}", file=sys.stderr)
        return EXIT_BITSTREAM
    except MetricError as exc:
        print(f"pcgs: metric error: {exc}", file=sys.stderr)
        return EXIT_METRIC
    except (OSError, PlyError) as exc:
        print(f"pcgs: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"pcgs: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
