from .bitstream import (
    BadMagic,
    BitstreamError,
    DimensionMismatch,
    EncodedFrames,
    TruncatedBitstream,
    VersionMismatch,
    decode,
    encode_frames,
)
from .config import FLAVORS, LOSSLESS_QP, CodecConfig
from .entropy import entropy_decode, entropy_encode
from .layers import (
    INTRA_DC,
    MERGE,
    SKIP,
    SPLIT,
    CuDecision,
    LayerResult,
    RdCost,
    encode_far,
    encode_near,
    merge_prediction,
    rd_cost,
)
from .transform import dequant_itransform, qstep, transform_quant

__all__ = [
    "BadMagic", "BitstreamError", "CodecConfig", "CuDecision", "DimensionMismatch", "EncodedFrames",
    "FLAVORS", "INTRA_DC", "LOSSLESS_QP", "LayerResult", "MERGE", "RdCost", "SKIP", "SPLIT",
    "TruncatedBitstream", "VersionMismatch", "decode", "dequant_itransform", "encode_far",
    "encode_frames", "encode_near", "entropy_decode", "entropy_encode", "merge_prediction", "qstep",
    "rd_cost", "transform_quant",
]
