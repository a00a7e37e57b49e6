import math
import numpy as np

from ..core.exceptions import ContractViolation
from ..models.fxp import FxPFormat, FxPValue


class FxPService:
    """Saturating fixed-point arithmetic.

    Scalar operations take and return ``FxPValue``. The ``*_raw`` helpers work
    on int64 numpy arrays of raw payloads and are what the kernels use; the
    scalar forms are thin wrappers so both paths round identically.
    """

    @staticmethod
    def saturate_raw(raw, fmt: FxPFormat):
        return np.clip(raw, fmt.min_raw, fmt.max_raw)

    @staticmethod
    def round_half_away(x):
        x = np.asarray(x, dtype=np.float64)
        return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)

    @staticmethod
    def quantize_raw(x, fmt: FxPFormat) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ContractViolation("quantize requires finite inputs")
        # Clip first so the scaled value cannot overflow int64
        limit = 2.0 ** (fmt.total_bits - 1 - fmt.frac_bits) * 2
        scaled = np.clip(x, -limit, limit) * (2.0 ** fmt.frac_bits)
        return FxPService.saturate_raw(FxPService.round_half_away(scaled), fmt)

    @staticmethod
    def dequantize_raw(raw, fmt: FxPFormat) -> np.ndarray:
        return np.asarray(raw, dtype=np.float64) * fmt.resolution

    @staticmethod
    def round_shift(v, k):
        """Shift right by k with round-half-away-from-zero; k <= 0 shifts left exactly.

        k may be an array broadcastable against v.
        """
        v = np.asarray(v, dtype=np.int64)
        k = np.asarray(k, dtype=np.int64)
        right = np.clip(k, 0, 63)
        left = np.maximum(-k, 0)
        half = np.where(right > 0, np.int64(1) << np.maximum(right - 1, 0), 0)
        mag = (np.abs(v) + half) >> right
        return np.where(v < 0, -mag, mag) << left

    @staticmethod
    def shift_floor(v, k: int):
        """Arithmetic shift: right by k (floor) for k > 0, left for k < 0."""
        v = np.asarray(v, dtype=np.int64)
        if k >= 0:
            return v >> k
        return v << -k

    @staticmethod
    def requantize_raw(raw, src: FxPFormat, dst: FxPFormat):
        """Move raws between formats: one rounding, then saturation."""
        shifted = FxPService.round_shift(raw, src.frac_bits - dst.frac_bits)
        return FxPService.saturate_raw(shifted, dst)

    # Scalar operations

    @staticmethod
    def quantize(x: float, fmt: FxPFormat) -> FxPValue:
        if not math.isfinite(x):
            raise ContractViolation(f"quantize requires a finite input, got {x}")
        raw = int(FxPService.quantize_raw(x, fmt))
        return FxPValue(raw=raw, format=fmt)

    @staticmethod
    def dequantize(v: FxPValue) -> float:
        return v.value

    @staticmethod
    def add_sat(a: FxPValue, b: FxPValue) -> FxPValue:
        if a.format != b.format:
            raise ContractViolation(f"add_sat format mismatch: {a.format.name} vs {b.format.name}")
        raw = min(max(a.raw + b.raw, a.format.min_raw), a.format.max_raw)
        return FxPValue(raw=raw, format=a.format)

    @staticmethod
    def sub_sat(a: FxPValue, b: FxPValue) -> FxPValue:
        if a.format != b.format:
            raise ContractViolation(f"sub_sat format mismatch: {a.format.name} vs {b.format.name}")
        raw = min(max(a.raw - b.raw, a.format.min_raw), a.format.max_raw)
        return FxPValue(raw=raw, format=a.format)

    @staticmethod
    def shift_right_arith(a: FxPValue, k: int) -> FxPValue:
        if not 0 <= k < a.format.total_bits:
            raise ContractViolation(f"shift {k} out of range for {a.format.name}")
        # Python's >> on ints is already floor division by 2**k
        return FxPValue(raw=a.raw >> k, format=a.format)
