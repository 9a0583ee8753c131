from __future__ import annotations

from dataclasses import dataclass

from ..epm import DEFAULT_MAX_SCALE

LOSSLESS_QP = 0
FLAVORS = ("baseline", "om", "non_om")


@dataclass(frozen=True)
class CodecConfig:
    qp: int = 32
    tau: int = 4
    lambda_c: float = 0.57
    ctu_size: int = 64
    min_cu: int = 8
    epm_rdo: bool = False
    om_merge: bool = False
    non_om_merge: bool = False
    epm_max_scale: float = DEFAULT_MAX_SCALE
    epm_occupied_blocks_only: bool = True
    bit_depth: int = 10

    def __post_init__(self):
        if not 0 <= self.qp <= 51:
            raise ValueError(f"qp must be in [0, 51], got {self.qp}")
        if self.om_merge and self.non_om_merge:
            raise ValueError("om_merge and non_om_merge are mutually exclusive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.ctu_size != 64 or self.min_cu not in (8, 16, 32, 64):
            raise ValueError("ctu_size must be 64 and min_cu one of 8/16/32/64")
        if not 1 <= self.bit_depth <= 16:
            raise ValueError("bit_depth must be in [1, 16]")
        if self.epm_max_scale < 1.0:
            raise ValueError("epm_max_scale must be >= 1")

    @property
    def lam(self) -> float:
        return self.lambda_c * 2.0 ** ((self.qp - 12) / 3.0)

    @property
    def lossless(self) -> bool:
        return self.qp == LOSSLESS_QP

    @property
    def merge_flavor(self) -> str:
        if self.om_merge:
            return "om"
        if self.non_om_merge:
            return "non_om"
        return "baseline"

    @property
    def flags(self) -> int:
        return int(self.epm_rdo) | int(self.om_merge) << 1 | int(self.non_om_merge) << 2

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1
