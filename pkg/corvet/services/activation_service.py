import math
from collections import deque
from typing import List, Tuple
import numpy as np

from ..core.exceptions import ContractViolation
from ..core.logging import app_logger
from ..models.activation import ActivationKind, AfReport, AfRequest
from ..models.cordic import CordicConfig
from ..models.fxp import FxPValue
from .cordic_service import CordicService
from .fxp_service import FxPService

SELU_LAMBDA = 1.0507
SELU_ALPHA = 1.6733
GELU_C1 = math.sqrt(2.0 / math.pi)
GELU_C3 = 0.044715 * GELU_C1
# Beyond this magnitude the GELU polynomial already saturates tanh
GELU_CLIP = 8

LN2 = math.log(2.0)
_LN2_BITS = 40
_LN2_RAW = int(FxPService.round_half_away(LN2 * 2.0 ** _LN2_BITS))


def _constant(value: float, frac: int) -> np.int64:
    return np.int64(FxPService.round_half_away(value * 2.0 ** frac))


class ActivationService:
    """Multi-function activation block built on the CORDIC kernels.

    All datapath helpers take and return int64 registers at ``frac`` bits
    (the format's fractional bits plus guard bits). HR is the hyperbolic
    rotation unit; for the quotient inside tanh that core is reconfigured to
    linear vectoring, while the LV divider is reserved for softmax normalization.
    """

    # Range reduction and exponentials

    @staticmethod
    def range_reduce_exp(x: float) -> Tuple[float, int]:
        """exp(x) == 2**k * exp(theta) with |theta| <= ln2/2."""
        k = int(FxPService.round_half_away(x / LN2))
        return x - k * LN2, k

    @staticmethod
    def range_reduce_raw(x_ext, frac: int):
        x_ext = np.asarray(x_ext, dtype=np.int64)
        k = FxPService.round_half_away(x_ext / (LN2 * 2.0 ** frac))
        theta = x_ext - FxPService.round_shift(k * _LN2_RAW, _LN2_BITS - frac)
        return theta, k

    @staticmethod
    def exp_ext(x_ext, frac: int, n: int):
        theta, k = ActivationService.range_reduce_raw(x_ext, frac)
        c, s, _ = CordicService.rotate_hyperbolic(theta, frac, n)
        # Clamp keeps the reconstruction shift inside int64; results there saturate anyway
        k = np.clip(k, -62, 60 - frac)
        return FxPService.round_shift(c + s, -k)

    @staticmethod
    def tanh_ext(x_ext, frac: int, n: int):
        """tanh at ``frac`` bits. The sinh/cosh quotient reconfigures the HR core to
        linear vectoring, so its cycles are HR busy time and the LV unit stays idle."""
        x_ext = np.asarray(x_ext, dtype=np.int64)
        one = np.int64(1) << frac
        u = np.abs(x_ext)

        # |x| <= 1: sinh/cosh straight from the rotation, quotient on the same core
        c, s, _ = CordicService.rotate_hyperbolic(np.minimum(u, one), frac, n)
        small = CordicService.scaled_divide(s, c, frac, n)

        # |x| > 1: 1 - 2/(e^{2u} + 1)
        e = ActivationService.exp_ext(2 * u, frac, n)
        large = one - CordicService.scaled_divide(2 * one, e + one, frac, n)

        t = np.where(u <= one, small, large)
        saturation = _constant((frac + 2) * LN2 / 2, frac)
        t = np.clip(np.where(u > saturation, one, t), 0, one)
        return np.where(x_ext < 0, -t, t)

    # Per-kind kernels on extended registers

    @staticmethod
    def _sigmoid2_ext(x_ext, frac: int, n: int):
        # 2*sigmoid(x) = 1 + tanh(x/2); x_ext carries guard bits so the halving is exact
        one = np.int64(1) << frac
        return one + ActivationService.tanh_ext(x_ext >> 1, frac, n)

    @staticmethod
    def _swish_ext(x_ext, frac: int, n: int):
        sig = FxPService.round_shift(ActivationService._sigmoid2_ext(x_ext, frac, n), 1)
        return CordicService.scaled_multiply(sig, x_ext, frac, n)

    @staticmethod
    def _selu_ext(x_ext, frac: int, n: int):
        one = np.int64(1) << frac
        pos = CordicService.scaled_multiply(_constant(SELU_LAMBDA, frac), x_ext, frac, n)
        e = ActivationService.exp_ext(np.minimum(x_ext, 0), frac, n)
        neg = CordicService.scaled_multiply(_constant(SELU_LAMBDA * SELU_ALPHA, frac), e - one, frac, n)
        return np.where(x_ext >= 0, pos, neg)

    @staticmethod
    def _gelu_ext(x_ext, frac: int, n: int):
        one = np.int64(1) << frac
        limit = np.int64(GELU_CLIP) << frac
        xc = np.clip(x_ext, -limit, limit)

        x2 = CordicService.scaled_multiply(xc, xc, frac, n)
        poly = CordicService.scaled_mac(_constant(GELU_C1, frac), _constant(GELU_C3, frac), x2, frac, n)
        # The two small multipliers: exact products, one rounding each
        inner = FxPService.round_shift(xc * poly, frac)
        t = ActivationService.tanh_ext(inner, frac, n)
        out = FxPService.round_shift(xc * (one + t), frac + 1)
        return np.where(np.abs(x_ext) > limit, np.maximum(x_ext, 0), out)

    @staticmethod
    def _softmax_ext(x_ext, frac: int, n: int):
        """Two-pass softmax over the last axis through a FIFO. Returns (outputs, peak depth)."""
        m = np.max(x_ext, axis=-1, keepdims=True)
        e = ActivationService.exp_ext(x_ext - m, frac, n)

        fifo = deque()
        total = np.zeros(e.shape[:-1], dtype=np.int64)
        for i in range(e.shape[-1]):
            fifo.append(e[..., i])
            total = total + e[..., i]
        peak = len(fifo)

        outputs = []
        while fifo:
            outputs.append(CordicService.scaled_divide(fifo.popleft(), total, frac, n))
        return np.stack(outputs, axis=-1), peak

    # Block interface

    @staticmethod
    def cost(kind: ActivationKind, iterations: int, count: int) -> AfReport:
        """Occupancy for ``count`` elements; data independent.

        For softmax ``count`` is the vector length. Every element pays one
        dispatch cycle on the time-multiplexing mux.
        """
        n = iterations
        kind = ActivationKind(kind)
        if count <= 0:
            return AfReport()
        if kind in (ActivationKind.RELU, ActivationKind.NONE):
            return AfReport(cycles_total=count)
        if kind in (ActivationKind.TANH, ActivationKind.SIGMOID, ActivationKind.SELU):
            return AfReport(cycles_total=count * (1 + 2 * n), hr_busy_cycles=count * 2 * n)
        if kind == ActivationKind.SWISH:
            return AfReport(cycles_total=count * (1 + 3 * n), hr_busy_cycles=count * 3 * n)
        if kind == ActivationKind.GELU:
            return AfReport(
                cycles_total=count * (1 + 4 * n + 2), hr_busy_cycles=count * 4 * n, multiplier_cycles=count * 2
            )
        # softmax: max pass, exp pass, divide pass
        return AfReport(
            cycles_total=3 * count + 2 * count * n,
            hr_busy_cycles=count * n,
            lv_busy_cycles=count * n,
            fifo_peak_depth=count,
        )

    @staticmethod
    def apply_raw(raw, kind: ActivationKind, cfg: CordicConfig) -> np.ndarray:
        """Apply ``kind`` to raws of ``cfg.format``; softmax runs over the last axis."""
        fmt = cfg.format
        raw = np.asarray(raw, dtype=np.int64)
        kind = ActivationKind(kind)

        if kind == ActivationKind.NONE:
            return raw.copy()
        if kind == ActivationKind.RELU:
            return np.maximum(raw, 0)

        G = cfg.guard_bits
        F = cfg.ext_frac
        n = cfg.iterations
        x_ext = raw << G

        if kind == ActivationKind.TANH:
            y = ActivationService.tanh_ext(x_ext, F, n)
            return FxPService.saturate_raw(FxPService.round_shift(y, G), fmt)
        if kind == ActivationKind.SIGMOID:
            y = ActivationService._sigmoid2_ext(x_ext, F, n)
            return FxPService.saturate_raw(FxPService.round_shift(y, G + 1), fmt)
        if kind == ActivationKind.SWISH:
            y = ActivationService._swish_ext(x_ext, F, n)
        elif kind == ActivationKind.SELU:
            y = ActivationService._selu_ext(x_ext, F, n)
        elif kind == ActivationKind.GELU:
            y = ActivationService._gelu_ext(x_ext, F, n)
        elif kind == ActivationKind.SOFTMAX:
            if raw.shape[-1] < 1:
                raise ContractViolation("softmax needs at least one value")
            y, _ = ActivationService._softmax_ext(x_ext, F, n)
        else:
            raise ContractViolation(f"unsupported activation {kind}")
        return FxPService.saturate_raw(FxPService.round_shift(y, G), fmt)

    @staticmethod
    def apply(req: AfRequest) -> Tuple[List[FxPValue], AfReport]:
        fmt = req.cfg.format
        raw = np.array([v.raw for v in req.values], dtype=np.int64)
        try:
            out = ActivationService.apply_raw(raw, req.kind, req.cfg)
        except Exception as e:
            app_logger.error(f"Error applying {req.kind.value} to {len(raw)} values: {str(e)}")
            raise

        report = ActivationService.cost(req.kind, req.cfg.iterations, len(raw))
        return [FxPValue(raw=int(r), format=fmt) for r in out], report

    # Single-kind conveniences

    @staticmethod
    def _one(kind: ActivationKind, x: FxPValue, cfg: CordicConfig) -> FxPValue:
        values, _ = ActivationService.apply(AfRequest(values=[x], kind=kind, cfg=cfg))
        return values[0]

    @staticmethod
    def tanh(x: FxPValue, cfg: CordicConfig) -> FxPValue:
        return ActivationService._one(ActivationKind.TANH, x, cfg)

    @staticmethod
    def sigmoid(x: FxPValue, cfg: CordicConfig) -> FxPValue:
        return ActivationService._one(ActivationKind.SIGMOID, x, cfg)

    @staticmethod
    def gelu(x: FxPValue, cfg: CordicConfig) -> FxPValue:
        return ActivationService._one(ActivationKind.GELU, x, cfg)

    @staticmethod
    def selu(x: FxPValue, cfg: CordicConfig) -> FxPValue:
        return ActivationService._one(ActivationKind.SELU, x, cfg)

    @staticmethod
    def swish(x: FxPValue, cfg: CordicConfig) -> FxPValue:
        return ActivationService._one(ActivationKind.SWISH, x, cfg)

    @staticmethod
    def softmax(values: List[FxPValue], cfg: CordicConfig) -> List[FxPValue]:
        out, _ = ActivationService.apply(AfRequest(values=values, kind=ActivationKind.SOFTMAX, cfg=cfg))
        return out

    # Double-precision reference with the same operator definitions

    @staticmethod
    def reference(kind: ActivationKind, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        kind = ActivationKind(kind)
        if kind == ActivationKind.NONE:
            return x.copy()
        if kind == ActivationKind.RELU:
            return np.maximum(x, 0.0)
        if kind == ActivationKind.TANH:
            return np.tanh(x)
        if kind == ActivationKind.SIGMOID:
            return 0.5 * (1.0 + np.tanh(x / 2.0))
        if kind == ActivationKind.SWISH:
            return x * 0.5 * (1.0 + np.tanh(x / 2.0))
        if kind == ActivationKind.SELU:
            return np.where(x > 0, SELU_LAMBDA * x, SELU_LAMBDA * SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))
        if kind == ActivationKind.GELU:
            return 0.5 * x * (1.0 + np.tanh(GELU_C1 * x + GELU_C3 * x ** 3))
        e = np.exp(x - np.max(x, axis=-1, keepdims=True))
        return e / np.sum(e, axis=-1, keepdims=True)
