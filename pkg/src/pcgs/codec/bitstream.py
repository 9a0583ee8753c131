"""Container format and frame-pair level encode/decode.

Layout (little-endian, byte-aligned sections)::

    "PCGS" u8 version
    u32 W, u32 H, u8 bit_depth, u8 qp, u16 tau, u8 flags, u8 min_cu
    u32 patch count, per patch: u8 axis, 3 x u16 origin, u32 u0, u32 v0, u16 width, u16 height
    occupancy:  u32 nbits + row-wise run lengths (ue), alternating empty/occupied
    near layer: u32 nbits + payload
    far layer:  u32 nbits + payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..projection import GeometryFramePair, Patch
from .config import CodecConfig
from .entropy import BitReader, BitWriter, TruncatedStream, bits_to_bytes, bytes_to_bits
from .layers import LayerResult, decode_layer, encode_far, encode_near

MAGIC = b"PCGS"
VERSION = 1
_HEAD = struct.Struct("<4sBIIBBHBB")
_PATCH = struct.Struct("<BHHHIIHH")
_U32 = struct.Struct("<I")

FLAG_EPM = 1
FLAG_OM = 2
FLAG_NON_OM = 4


class BitstreamError(ValueError):
    pass


class BadMagic(BitstreamError):
    pass


class VersionMismatch(BitstreamError):
    pass


class TruncatedBitstream(BitstreamError):
    pass


class DimensionMismatch(BitstreamError):
    pass


@dataclass
class EncodedFrames:
    data: bytes
    near: LayerResult
    far: LayerResult
    recon: GeometryFramePair
    occupancy_bits: int

    @property
    def bits_total(self) -> int:
        return 8 * len(self.data)

    @property
    def bits_geometry(self) -> int:
        return self.near.nbits + self.far.nbits


@dataclass
class Header:
    width: int
    height: int
    config: CodecConfig


def encode_occupancy(occ: np.ndarray) -> str:
    w = BitWriter()
    for row in np.asarray(occ, dtype=bool):
        edges = np.flatnonzero(np.diff(np.concatenate(([False], row, [not row[-1]])).astype(np.int8)))
        # edges are the run boundaries; the first run counts empty pixels and may be 0
        bounds = np.concatenate(([0], edges))
        for length in np.diff(bounds):
            w.ue(int(length))
    return w.getvalue()


def decode_occupancy(bits: str, width: int, height: int) -> np.ndarray:
    r = BitReader(bits)
    occ = np.zeros((height, width), dtype=bool)
    for y in range(height):
        x, value = 0, False
        while x < width:
            n = r.ue()
            if x + n > width:
                raise DimensionMismatch(f"occupancy row {y} overruns width {width}")
            occ[y, x:x + n] = value
            x += n
            value = not value
    if r.remaining:
        raise DimensionMismatch("trailing occupancy bits")
    return occ


def _section(bits: str) -> bytes:
    return _U32.pack(len(bits)) + bits_to_bytes(bits)


def write_bitstream(header: Header, patches: list[Patch], occ_bits: str, near_bits: str, far_bits: str) -> bytes:
    cfg = header.config
    out = [_HEAD.pack(MAGIC, VERSION, header.width, header.height, cfg.bit_depth, cfg.qp,
                      cfg.tau, cfg.flags, cfg.min_cu)]
    out.append(_U32.pack(len(patches)))
    for p in patches:
        out.append(_PATCH.pack(p.axis, *p.origin3d, *p.placement2d, p.width, p.height))
    out += [_section(occ_bits), _section(near_bits), _section(far_bits)]
    return b"".join(out)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedBitstream(f"stream ends at byte {len(self.data)}, needed {self.pos + n}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def section(self) -> str:
        (nbits,) = self.unpack(_U32)
        return bytes_to_bits(self.take((nbits + 7) // 8), nbits)


def read_bitstream(data: bytes):
    cur = _Cursor(data)
    if len(data) < 5:
        raise TruncatedBitstream("stream shorter than magic + version")
    if data[:4] != MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if data[4] != VERSION:
        raise VersionMismatch(f"version {data[4]} (expected {VERSION})")
    _, _, w, h, b, qp, tau, flags, min_cu = cur.unpack(_HEAD)
    try:
        cfg = CodecConfig(qp=qp, tau=tau, bit_depth=b, min_cu=min_cu, epm_rdo=bool(flags & FLAG_EPM),
                          om_merge=bool(flags & FLAG_OM), non_om_merge=bool(flags & FLAG_NON_OM))
    except ValueError as exc:
        raise BitstreamError(f"invalid header: {exc}") from None
    if w == 0 or h == 0 or w % 64 or h % 64:
        raise DimensionMismatch(f"frame {w}x{h} is not a positive multiple of 64")
    (count,) = cur.unpack(_U32)
    patches = []
    for _ in range(count):
        axis, ox, oy, oz, u0, v0, pw, ph = cur.unpack(_PATCH)
        if axis > 5:
            raise BitstreamError(f"bad patch axis {axis}")
        if u0 + pw > w or v0 + ph > h:
            raise DimensionMismatch("patch footprint exceeds the frame")
        patches.append(Patch(axis, (ox, oy, oz), pw, ph, (u0, v0)))
    sections = [cur.section() for _ in range(3)]
    if cur.pos != len(data):
        raise BitstreamError(f"{len(data) - cur.pos} trailing bytes")
    return Header(w, h, cfg), patches, sections


def encode_frames(frames: GeometryFramePair, config: CodecConfig) -> EncodedFrames:
    """Code a padded frame pair; the returned recon is exactly what :func:`decode` yields."""
    if frames.bit_depth != config.bit_depth:
        raise ValueError("frame and config bit depths differ")
    near = encode_near(frames.near, frames.occupancy, config)
    far = encode_far(frames.far, frames.occupancy, near.recon, config)
    occ_bits = encode_occupancy(frames.occupancy)
    h, w = frames.shape
    data = write_bitstream(Header(w, h, config), frames.patches, occ_bits, near.bits, far.bits)
    recon = GeometryFramePair(near.recon, far.recon, frames.occupancy.copy(), list(frames.patches),
                              frames.bit_depth)
    return EncodedFrames(data, near, far, recon, len(occ_bits))


def decode(data: bytes) -> tuple[GeometryFramePair, Header]:
    header, patches, (occ_bits, near_bits, far_bits) = read_bitstream(data)
    cfg = header.config
    shape = (header.height, header.width)
    try:
        occ = decode_occupancy(occ_bits, header.width, header.height)
        near = decode_layer(near_bits, shape, cfg, occ)
        far = decode_layer(far_bits, shape, cfg, occ, near)
    except TruncatedStream as exc:
        raise TruncatedBitstream(str(exc)) from None
    except BitstreamError:
        raise
    except ValueError as exc:
        raise BitstreamError(str(exc)) from None
    return GeometryFramePair(near, far, occ, patches, cfg.bit_depth), header
