from typing import List, Tuple
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core.exceptions import ConfigurationError, ContractViolation
from ..core.logging import app_logger
from ..models.fxp import FxPFormat, FxPValue
from ..models.pooling import FeatureMap, PoolVariant, PoolWindow
from .cordic_service import CordicService
from .fxp_service import FxPService


def _flatten_window(a: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape[:-2] + (-1,))


class PoolingService:
    """Absolute Average Deviation pooling and the output normalization stage.

    Deviation sums are exact integers over raws; only the final divide by
    M = N(N-1) is approximate. aad2 is |a-b|/2 while aad_n([a, b]) is
    |a-b|, since the ordered-pair sum counts the pair twice and M = 2.
    """

    @staticmethod
    def divide_iterations(fmt: FxPFormat) -> int:
        return fmt.total_bits + 4

    @staticmethod
    def aad2_raw(a, b, fmt: FxPFormat):
        diff = FxPService.saturate_raw(np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64), fmt)
        sign = np.where(diff < 0, -1, 1)
        # -min_raw saturates back into range
        magnitude = FxPService.saturate_raw(diff * sign, fmt)
        return magnitude >> 1

    @staticmethod
    def aad2(a: FxPValue, b: FxPValue) -> FxPValue:
        if a.format != b.format:
            raise ContractViolation(f"aad2 format mismatch: {a.format.name} vs {b.format.name}")
        return FxPValue(raw=int(PoolingService.aad2_raw(a.raw, b.raw, a.format)), format=a.format)

    @staticmethod
    def ordered_pair_sum(windows) -> np.ndarray:
        """Sum of |x_i - x_j| over ordered pairs i != j of the last axis, in row-major pair order."""
        windows = np.asarray(windows, dtype=np.int64)
        n = windows.shape[-1]
        total = np.zeros(windows.shape[:-1], dtype=np.int64)
        for i in range(n):
            for j in range(n):
                if i != j:
                    total = total + np.abs(windows[..., i] - windows[..., j])
        return total

    @staticmethod
    def _cross_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        total = np.zeros(a.shape[:-1], dtype=np.int64)
        for i in range(a.shape[-1]):
            total = total + np.abs(a[..., i:i + 1] - b).sum(axis=-1)
        return total

    @staticmethod
    def normalize_sum(sums, n: int, fmt: FxPFormat):
        """Divide ordered-pair sums by M = n(n-1) and saturate into ``fmt``."""
        if n < 2:
            raise ConfigurationError(f"AAD needs at least two values, got {n}")
        m = n * (n - 1)
        sums = np.asarray(sums, dtype=np.int64)
        if m & (m - 1) == 0:
            out = FxPService.round_shift(sums, m.bit_length() - 1)
        else:
            out = CordicService.scaled_divide(sums, m, 0, PoolingService.divide_iterations(fmt))
        return FxPService.saturate_raw(out, fmt)

    @staticmethod
    def aad_n_raw(windows, fmt: FxPFormat):
        windows = np.asarray(windows, dtype=np.int64)
        sums = PoolingService.ordered_pair_sum(windows)
        return PoolingService.normalize_sum(sums, windows.shape[-1], fmt)

    @staticmethod
    def aad_n(values: List[FxPValue]) -> FxPValue:
        if len(values) < 2:
            raise ConfigurationError(f"AAD needs at least two values, got {len(values)}")
        fmt = values[0].format
        if any(v.format != fmt for v in values):
            raise ContractViolation("aad_n values must share one format")
        raw = PoolingService.aad_n_raw([v.raw for v in values], fmt)
        return FxPValue(raw=int(raw), format=fmt)

    # Window sums for both hardware variants

    @staticmethod
    def _check_window(height: int, width: int, win: PoolWindow):
        if win.size < 2:
            raise ConfigurationError("a 1x1 pooling window has no deviations (M = 0)")
        if win.window_h > height or win.window_w > width:
            raise ConfigurationError(
                f"window {win.window_h}x{win.window_w} does not fit a {height}x{width} feature map"
            )

    @staticmethod
    def _parallel_sums(raw: np.ndarray, win: PoolWindow) -> np.ndarray:
        s = win.stride
        views = sliding_window_view(raw, (win.window_h, win.window_w), axis=(-2, -1))[..., ::s, ::s, :, :]
        return PoolingService.ordered_pair_sum(_flatten_window(views))

    @staticmethod
    def _sliding_sums(raw: np.ndarray, win: PoolWindow) -> np.ndarray:
        """Row by row, the window's sum is updated as columns leave and enter."""
        kh, kw, s = win.window_h, win.window_w, win.stride
        oh, ow = win.output_shape(raw.shape[-2], raw.shape[-1])
        out = np.zeros(raw.shape[:-2] + (oh, ow), dtype=np.int64)

        for r in range(oh):
            band = raw[..., r * s:r * s + kh, :]
            acc = PoolingService.ordered_pair_sum(_flatten_window(band[..., :, 0:kw]))
            out[..., r, 0] = acc
            for c in range(1, ow):
                start, prev = c * s, (c - 1) * s
                if s >= kw:
                    acc = PoolingService.ordered_pair_sum(_flatten_window(band[..., :, start:start + kw]))
                else:
                    leaving = _flatten_window(band[..., :, prev:start])
                    kept = _flatten_window(band[..., :, start:prev + kw])
                    entering = _flatten_window(band[..., :, prev + kw:start + kw])
                    acc = (
                        acc
                        - 2 * PoolingService._cross_sum(leaving, kept)
                        - PoolingService.ordered_pair_sum(leaving)
                        + 2 * PoolingService._cross_sum(entering, kept)
                        + PoolingService.ordered_pair_sum(entering)
                    )
                out[..., r, c] = acc
        return out

    @staticmethod
    def pool_raw(raw, win: PoolWindow, fmt: FxPFormat, variant: PoolVariant = None) -> np.ndarray:
        """AAD pooling over the last two axes of ``raw``; leading axes are independent."""
        raw = np.asarray(raw, dtype=np.int64)
        PoolingService._check_window(raw.shape[-2], raw.shape[-1], win)
        variant = PoolVariant(variant or win.variant)

        if variant == PoolVariant.PARALLEL:
            sums = PoolingService._parallel_sums(raw, win)
        else:
            sums = PoolingService._sliding_sums(raw, win)
        return PoolingService.normalize_sum(sums, win.size, fmt)

    @staticmethod
    def pool(fmap: FeatureMap, win: PoolWindow, variant: PoolVariant = None) -> FeatureMap:
        try:
            out = PoolingService.pool_raw(fmap.data, win, fmap.format, variant)
        except ConfigurationError as e:
            app_logger.error(f"Error pooling map of shape {fmap.shape}: {str(e)}")
            raise
        return FeatureMap(data=out, format=fmap.format)

    @staticmethod
    def cost(win: PoolWindow, fmt: FxPFormat, cells: int) -> int:
        """Cycles for ``cells`` output cells on the pooling unit."""
        m = win.size * (win.size - 1)
        divide = 0 if m & (m - 1) == 0 else PoolingService.divide_iterations(fmt)
        if win.variant == PoolVariant.PARALLEL:
            per_cell = 1 + (m - 1).bit_length() + divide
        else:
            per_cell = win.size + divide
        return cells * per_cell

    # Normalization stage (power-of-two max-abs rescale)

    @staticmethod
    def normalize_shift(raw, fmt: FxPFormat, axes=None) -> np.ndarray:
        peak = np.max(np.abs(np.asarray(raw, dtype=np.int64)), axis=axes)
        # ceil(log2(peak / 2**frac)) == bit_length(peak - 1) - frac for integers
        bits = np.frexp(np.maximum(peak - 1, 0).astype(np.float64))[1].astype(np.int64)
        return np.maximum(bits - fmt.frac_bits, 0)

    @staticmethod
    def normalize_raw(raw, fmt: FxPFormat, axes=None) -> Tuple[np.ndarray, np.ndarray]:
        """Shift right by ceil(log2 max|x|) when max|x| > 1. ``axes`` selects the reduction.

        Outputs lie in [-1, 1]: a peak of exactly -2**k lands on -1, as does an
        untouched -1 when max|x| == 1.
        """
        raw = np.asarray(raw, dtype=np.int64)
        shift = PoolingService.normalize_shift(raw, fmt, axes)
        if axes is not None:
            shift_b = np.expand_dims(shift, axes)
        else:
            shift_b = shift
        return raw >> shift_b, shift

    @staticmethod
    def normalize(fmap: FeatureMap) -> FeatureMap:
        out, _ = PoolingService.normalize_raw(fmap.data, fmap.format)
        return FeatureMap(data=out, format=fmap.format)

    # Double-precision reference

    @staticmethod
    def pool_float(x, win: PoolWindow) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        PoolingService._check_window(x.shape[-2], x.shape[-1], win)
        s = win.stride
        views = _flatten_window(
            sliding_window_view(x, (win.window_h, win.window_w), axis=(-2, -1))[..., ::s, ::s, :, :]
        )
        diffs = np.abs(views[..., :, None] - views[..., None, :]).sum(axis=(-1, -2))
        return diffs / (win.size * (win.size - 1))

    @staticmethod
    def normalize_float(x, axes=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        peak = np.max(np.abs(x), axis=axes, keepdims=axes is not None)
        shift = np.where(peak > 1.0, np.ceil(np.log2(np.maximum(peak, 1.0))), 0.0)
        return x / 2.0 ** shift
