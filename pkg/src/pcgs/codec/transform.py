"""Fixed-point separable DCT-II and uniform scalar quantization.

Basis matrices are ``round(128 * sqrt(N) * C_N)`` with ``C_N`` the orthonormal
DCT-II, so ``T @ R @ T.T`` equals the orthonormal coefficients times
``2**(14 + log2 N)``. Rounding leaves the basis ~0.6% off orthogonal, so the
inverse uses a fixed-point copy of the exact inverse matrix instead of the
transpose, in two passes with an intermediate shift. All
arithmetic is int64 and deterministic, which keeps encoder and decoder
reconstructions bit-identical.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

BASIS_BITS = 7
SIZES = (8, 16, 32, 64)
# step(qp) = LEVEL_SCALE[qp % 6] * 2**(qp // 6) / 64, i.e. 2**((qp - 4) / 6) in fixed point
LEVEL_SCALE = (40, 45, 51, 57, 64, 72)
INTRA_DEADZONE = 2  # sixths: rounding offset 1/3
INTER_DEADZONE = 1  # sixths: rounding offset 1/6


@lru_cache(maxsize=None)
def dct_basis(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    c[0] /= np.sqrt(2.0)
    t = np.rint((1 << BASIS_BITS) * np.sqrt(n) * c).astype(np.int64)
    t.setflags(write=False)
    return t


INV_BITS = 8  # extra precision of the inverse basis
_MID_SHIFT = INV_BITS + 7


@lru_cache(maxsize=None)
def inverse_basis(n: int) -> np.ndarray:
    """round(2**(norm_shift + 8) * inv(T)): the exact inverse of the rounded basis, in fixed point.

    Close to ``T.T * 2**8`` but also undoes the rounding that keeps ``T`` from
    being exactly orthogonal.
    """
    t = dct_basis(n).astype(np.float64)
    inv = np.rint(np.linalg.inv(t) * float(1 << (_norm_shift(n) + INV_BITS))).astype(np.int64)
    inv.setflags(write=False)
    return inv


def _norm_shift(n: int) -> int:
    return 2 * BASIS_BITS + n.bit_length() - 1


def qstep(qp: int) -> float:
    return LEVEL_SCALE[qp % 6] * 2 ** (qp // 6) / 64


def _round_shift(x: np.ndarray, shift: int) -> np.ndarray:
    """Divide by 2**shift, rounding half away from zero."""
    mag = (np.abs(x) + (1 << (shift - 1))) >> shift
    return np.where(x < 0, -mag, mag)


def transform_quant(residual, qp: int, deadzone: int = INTRA_DEADZONE) -> np.ndarray:
    """Forward transform and quantize a square residual block to integer levels.

    ``deadzone`` is the rounding offset in sixths of a step.
    """
    r = np.asarray(residual, dtype=np.int64)
    n = r.shape[0]
    t = dct_basis(n)
    x = t @ r @ t.T
    den = LEVEL_SCALE[qp % 6] << (_norm_shift(n) + qp // 6)
    mag = (np.abs(x) * 384 + deadzone * den) // (6 * den)
    return np.where(x < 0, -mag, mag)


def dequant_itransform(levels, qp: int) -> np.ndarray:
    lv = np.asarray(levels, dtype=np.int64)
    n = lv.shape[0]
    s = inverse_basis(n)
    scaled = lv * (LEVEL_SCALE[qp % 6] << (qp // 6))
    mid = _round_shift(s @ scaled, _MID_SHIFT)
    return _round_shift(mid @ s.T, 6 + _norm_shift(n) + 2 * INV_BITS - _MID_SHIFT)


@lru_cache(maxsize=None)
def zigzag(n: int) -> np.ndarray:
    """Flat indices of an n x n block in zig-zag order."""
    order = sorted(
        ((r, c) for r in range(n) for c in range(n)),
        key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]),
    )
    out = np.array([r * n + c for r, c in order], dtype=np.int64)
    out.setflags(write=False)
    return out
