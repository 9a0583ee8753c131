"""Quadtree RDO coding of one depth layer.

Near layers are intra coded. Far layers use the reconstructed near layer as a
co-located (zero motion) reference: SKIP copies it, MERGE predicts from it
(optionally offset by +1, see :func:`merge_prediction`) and codes a residual.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..epm import NormalEstimate, ctu_normal
from .config import CodecConfig
from .entropy import BitReader, BitWriter, block_bits, read_block, write_block
from .transform import INTER_DEADZONE, INTRA_DEADZONE, dequant_itransform, transform_quant

INTRA_DC = "INTRA_DC"
SKIP = "SKIP"
MERGE = "MERGE"
SPLIT = "SPLIT"

# Far-layer mode codes; prefix-free and strictly longer in this order.
FAR_MODE_CODES = {SKIP: "1", MERGE: "01", INTRA_DC: "001"}
_FAR_MODES = (SKIP, MERGE, INTRA_DC)


@dataclass(frozen=True)
class RdCost:
    j: float
    d: int
    r: int


def rd_cost(d_sse: int, bits: int, lambda_eff: float) -> RdCost:
    return RdCost(d_sse + lambda_eff * bits, int(d_sse), int(bits))


@dataclass
class CuDecision:
    mode: str
    x: int
    y: int
    size: int
    rd: RdCost
    levels: np.ndarray | None = field(default=None, repr=False)
    children: list[CuDecision] | None = None

    def leaves(self):
        if self.children is None:
            yield self
        else:
            for c in self.children:
                yield from c.leaves()


@dataclass
class LayerResult:
    bits: str
    recon: np.ndarray
    ctus: list[CuDecision]
    normals: list[NormalEstimate | None]

    @property
    def nbits(self) -> int:
        return len(self.bits)

    def mode_counts(self) -> Counter:
        return Counter(leaf.mode for ctu in self.ctus for leaf in ctu.leaves())

    @property
    def epm_scales(self) -> list[float]:
        return [n.lambda_scale for n in self.normals if n is not None]


def merge_prediction(ref_block, occupancy_block, flavor: str = "baseline", bit_depth: int = 10) -> np.ndarray:
    """Zero-motion merge predictor from the co-located near reconstruction.

    ``om`` adds 1 at occupied pixels only, ``non_om`` adds 1 everywhere; both
    saturate at ``2**bit_depth - 1``.
    """
    ref = np.asarray(ref_block, dtype=np.int64)
    if flavor == "baseline":
        return ref.copy()
    if flavor == "om":
        occ = np.asarray(occupancy_block, dtype=bool)
        if occ.shape != ref.shape:
            raise ValueError("reference and occupancy blocks differ in shape")
        pred = ref + occ
    elif flavor == "non_om":
        pred = ref + 1
    else:
        raise ValueError(f"unknown merge flavor {flavor!r}")
    return np.minimum(pred, (1 << bit_depth) - 1)


def _dc_value(recon: np.ndarray, x: int, y: int, n: int, fallback: int) -> int:
    total = count = 0
    if y > 0:
        total += int(recon[y - 1, x:x + n].sum())
        count += n
    if x > 0:
        total += int(recon[y:y + n, x - 1].sum())
        count += n
    return (total + count // 2) // count if count else fallback


class _Layer:
    """Shared state for encoding or decoding one layer."""

    def __init__(self, shape, config: CodecConfig, occupancy, ref=None):
        h, w = shape
        if h % config.ctu_size or w % config.ctu_size:
            raise ValueError(f"frame {w}x{h} is not a multiple of the CTU size {config.ctu_size}")
        self.cfg = config
        self.occ = np.asarray(occupancy, dtype=bool)
        self.ref = None if ref is None else np.asarray(ref, dtype=np.int64)
        self.recon = np.zeros(shape, dtype=np.int64)
        self.far = ref is not None
        self.fallback = 1 << (config.bit_depth - 1)

    def ctu_origins(self):
        h, w = self.recon.shape
        s = self.cfg.ctu_size
        for y in range(0, h, s):
            for x in range(0, w, s):
                yield x, y

    def prediction(self, mode: str, x: int, y: int, n: int) -> np.ndarray:
        if mode == INTRA_DC:
            return np.full((n, n), _dc_value(self.recon, x, y, n, self.fallback), dtype=np.int64)
        ref = self.ref[y:y + n, x:x + n]
        if mode == SKIP:
            return ref.copy()
        return merge_prediction(ref, self.occ[y:y + n, x:x + n], self.cfg.merge_flavor, self.cfg.bit_depth)

    def residual(self, levels: np.ndarray, inter: bool) -> np.ndarray:
        if self.cfg.lossless:
            return levels
        return dequant_itransform(levels, self.cfg.qp)

    def quantize(self, resid: np.ndarray, inter: bool) -> np.ndarray:
        if self.cfg.lossless:
            return resid
        return transform_quant(resid, self.cfg.qp, INTER_DEADZONE if inter else INTRA_DEADZONE)

    def rebuild(self, pred: np.ndarray, levels: np.ndarray | None, inter: bool) -> np.ndarray:
        if levels is None:
            return pred
        return np.clip(pred + self.residual(levels, inter), 0, self.cfg.max_value)

    def split_flag_bits(self, n: int) -> int:
        return 1 if n > self.cfg.min_cu else 0


class _Encoder(_Layer):
    def __init__(self, orig, config, occupancy, ref=None):
        super().__init__(orig.shape, config, occupancy, ref)
        self.orig = np.asarray(orig, dtype=np.int64)

    def encode(self) -> LayerResult:
        cfg = self.cfg
        s = cfg.ctu_size
        ctus, normals = [], []
        for x, y in self.ctu_origins():
            normal = None
            scale = 1.0
            if self.far and cfg.epm_rdo:
                normal = ctu_normal(
                    self.orig[y:y + s, x:x + s], self.occ[y:y + s, x:x + s],
                    cfg.epm_max_scale, cfg.epm_occupied_blocks_only,
                )
                scale = normal.lambda_scale
            normals.append(normal)
            ctus.append(self._rdo(x, y, s, cfg.lam * scale))
        writer = BitWriter()
        for node in ctus:
            self._write(writer, node)
        return LayerResult(writer.getvalue(), self.recon, ctus, normals)

    def _candidate(self, mode: str, x: int, y: int, n: int, lam: float):
        pred = self.prediction(mode, x, y, n)
        bits = self.split_flag_bits(n)
        if self.far:
            bits += len(FAR_MODE_CODES[mode])
        levels = None
        if mode != SKIP:
            inter = mode == MERGE
            levels = self.quantize(self.orig[y:y + n, x:x + n] - pred, inter)
            bits += block_bits(levels)
            rec = self.rebuild(pred, levels, inter)
        else:
            rec = pred
        d = int(((self.orig[y:y + n, x:x + n] - rec) ** 2).sum())
        return CuDecision(mode, x, y, n, rd_cost(d, bits, lam), levels), rec

    def _rdo(self, x: int, y: int, n: int, lam: float) -> CuDecision:
        best, best_rec = None, None
        for mode in (_FAR_MODES if self.far else (INTRA_DC,)):
            cand, rec = self._candidate(mode, x, y, n, lam)
            if best is None or cand.rd.j < best.rd.j:
                best, best_rec = cand, rec
        if n > self.cfg.min_cu:
            h = n // 2
            # children write their reconstruction as they go, so later
            # siblings see the right intra neighbours
            kids = [self._rdo(x + dx, y + dy, h, lam) for dy in (0, h) for dx in (0, h)]
            d = sum(k.rd.d for k in kids)
            r = 1 + sum(k.rd.r for k in kids)
            split = CuDecision(SPLIT, x, y, n, rd_cost(d, r, lam), children=kids)
            if split.rd.j < best.rd.j:
                return split
        self.recon[y:y + n, x:x + n] = best_rec
        return best

    def _write(self, w: BitWriter, node: CuDecision) -> None:
        if node.size > self.cfg.min_cu:
            w.flag(node.mode == SPLIT)
        if node.mode == SPLIT:
            for kid in node.children:
                self._write(w, kid)
            return
        if self.far:
            w.bits(FAR_MODE_CODES[node.mode])
        if node.levels is not None:
            write_block(w, node.levels)


class _Decoder(_Layer):
    def decode(self, reader: BitReader) -> np.ndarray:
        for x, y in self.ctu_origins():
            self._read(reader, x, y, self.cfg.ctu_size)
        return self.recon

    def _read(self, r: BitReader, x: int, y: int, n: int) -> None:
        if n > self.cfg.min_cu and r.flag():
            h = n // 2
            for dy in (0, h):
                for dx in (0, h):
                    self._read(r, x + dx, y + dy, h)
            return
        mode = INTRA_DC
        if self.far:
            mode = SKIP if r.flag() else MERGE if r.flag() else INTRA_DC if r.flag() else None
            if mode is None:
                raise ValueError("invalid far-layer mode code")
        pred = self.prediction(mode, x, y, n)
        levels = None if mode == SKIP else read_block(r, n)
        self.recon[y:y + n, x:x + n] = self.rebuild(pred, levels, mode == MERGE)


def encode_near(frame, occupancy, config: CodecConfig) -> LayerResult:
    return _Encoder(frame, config, occupancy).encode()


def encode_far(frame, occupancy, near_recon, config: CodecConfig) -> LayerResult:
    near_recon = np.asarray(near_recon)
    if near_recon.shape != np.shape(frame):
        raise ValueError("near reconstruction and far frame differ in shape")
    return _Encoder(frame, config, occupancy, near_recon).encode()


def decode_layer(bits: str, shape, config: CodecConfig, occupancy, ref=None) -> np.ndarray:
    reader = BitReader(bits)
    recon = _Decoder(shape, config, occupancy, ref).decode(reader)
    if reader.remaining:
        raise ValueError(f"{reader.remaining} trailing bits in layer payload")
    return recon
