"""Exp-Golomb (k=0) bit I/O and coefficient block coding.

Bits are held as ``'0'``/``'1'`` strings while a payload is assembled; this is
much faster in CPython than bit-by-bit integer packing.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .transform import zigzag


class TruncatedStream(ValueError):
    pass


def ue_code(v: int) -> str:
    if v < 0:
        raise ValueError("ue(v) needs v >= 0")
    body = bin(v + 1)[2:]
    return "0" * (len(body) - 1) + body


def se_map(v: int) -> int:
    return 2 * v - 1 if v > 0 else -2 * v


def se_unmap(k: int) -> int:
    return (k + 1) // 2 if k % 2 else -(k // 2)


def se_code(v: int) -> str:
    return ue_code(se_map(v))


def ue_bits(values) -> np.ndarray:
    """Codeword lengths of ue(v), vectorised."""
    v = np.asarray(values, dtype=np.int64) + 1
    # floor(log2) via frexp is exact for integers below 2**53
    _, e = np.frexp(v.astype(np.float64))
    return 2 * (e - 1) + 1


def se_bits(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.int64)
    return ue_bits(np.where(v > 0, 2 * v - 1, -2 * v))


class BitWriter:
    def __init__(self):
        self._parts: list[str] = []
        self.nbits = 0

    def bits(self, s: str) -> None:
        self._parts.append(s)
        self.nbits += len(s)

    def flag(self, b: bool) -> None:
        self.bits("1" if b else "0")

    def ue(self, v: int) -> None:
        self.bits(ue_code(int(v)))

    def se(self, v: int) -> None:
        self.bits(se_code(int(v)))

    def getvalue(self) -> str:
        s = "".join(self._parts)
        self._parts = [s]
        return s

    def to_bytes(self) -> bytes:
        return bits_to_bytes(self.getvalue())


class BitReader:
    def __init__(self, bits: str):
        self.bits = bits
        self.pos = 0

    def _need(self, n: int) -> None:
        if self.pos + n > len(self.bits):
            raise TruncatedStream(f"need {n} bits at {self.pos}, stream has {len(self.bits)}")

    def flag(self) -> bool:
        self._need(1)
        b = self.bits[self.pos] == "1"
        self.pos += 1
        return b

    def read(self, n: int) -> str:
        self._need(n)
        s = self.bits[self.pos:self.pos + n]
        self.pos += n
        return s

    def ue(self) -> int:
        one = self.bits.find("1", self.pos)
        if one < 0:
            raise TruncatedStream(f"no terminating 1 after bit {self.pos}")
        zeros = one - self.pos
        self._need(2 * zeros + 1)
        v = int(self.bits[one:one + zeros + 1], 2) - 1
        self.pos = one + zeros + 1
        return v

    def se(self) -> int:
        return se_unmap(self.ue())

    @property
    def remaining(self) -> int:
        return len(self.bits) - self.pos


def bits_to_bytes(bits: str) -> bytes:
    if not bits:
        return b""
    pad = -len(bits) % 8
    return int(bits + "0" * pad, 2).to_bytes((len(bits) + pad) // 8, "big")


def bytes_to_bits(data: bytes, nbits: int) -> str:
    if nbits > 8 * len(data):
        raise TruncatedStream(f"{nbits} bits requested from {len(data)} bytes")
    if nbits == 0:
        return ""
    return bin(int.from_bytes(data, "big"))[2:].zfill(8 * len(data))[:nbits]


def entropy_encode(symbols: Iterable[int]) -> str:
    """Signed exp-Golomb codes for a sequence of integers."""
    return "".join(se_code(int(v)) for v in symbols)


def entropy_decode(bits: str, count: int | None = None) -> list[int]:
    """Inverse of :func:`entropy_encode`; ``count=None`` consumes every bit."""
    reader = BitReader(bits)
    out = []
    while (count is None and reader.remaining) or (count is not None and len(out) < count):
        out.append(reader.se())
    return out


def scan_levels(levels: np.ndarray) -> tuple[np.ndarray, int]:
    """Zig-zag scan; returns the scanned levels and the count up to the last nonzero."""
    n = levels.shape[0]
    scanned = levels.ravel()[zigzag(n)]
    nz = np.flatnonzero(scanned)
    return scanned, int(nz[-1]) + 1 if len(nz) else 0


def block_bits(levels: np.ndarray) -> int:
    scanned, last = scan_levels(levels)
    return int(ue_bits(last)) + int(se_bits(scanned[:last]).sum())


def write_block(writer: BitWriter, levels: np.ndarray) -> None:
    scanned, last = scan_levels(levels)
    writer.ue(last)
    if last:
        writer.bits("".join(se_code(int(v)) for v in scanned[:last]))


def read_block(reader: BitReader, n: int) -> np.ndarray:
    last = reader.ue()
    if last > n * n:
        raise ValueError(f"last-significant index {last} exceeds {n}x{n} block")
    scanned = np.zeros(n * n, dtype=np.int64)
    for i in range(last):
        scanned[i] = reader.se()
    out = np.zeros(n * n, dtype=np.int64)
    out[zigzag(n)] = scanned
    return out.reshape(n, n)
