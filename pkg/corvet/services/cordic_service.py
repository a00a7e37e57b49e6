import math
from functools import lru_cache
from typing import List, Tuple
import numpy as np

from ..core.exceptions import ContractViolation, CordicDomainError
from ..core.logging import app_logger
from ..models.cordic import (
    CordicConfig,
    CordicMode,
    CordicResult,
    Coordinate,
    LINEAR_ROTATION,
    LINEAR_VECTORING,
    HYPERBOLIC_ROTATION,
)
from ..models.fxp import FxPValue
from .fxp_service import FxPService

# Shift indices executed twice in hyperbolic mode
HYPERBOLIC_REPEATS = (4, 13, 40)
HYPERBOLIC_DOMAIN = 1.11
LINEAR_DOMAIN = 2.0

# Divider operands are widened until the divisor has this many bits above
# the iteration count, keeping truncation below the last quotient bit.
_DIVIDE_HEADROOM = 4


def _tz_shift(v, i):
    # Sign-magnitude shifter: truncates toward zero, so -v shifts to -(v shifted)
    return np.where(v >= 0, v >> i, -((-v) >> i))


def _bit_length(v) -> np.ndarray:
    # Magnitudes stay well below 2**53, where frexp is exact
    return np.frexp(np.asarray(v, dtype=np.float64))[1].astype(np.int64)


@lru_cache(maxsize=None)
def _atanh_table(frac: int, max_index: int) -> np.ndarray:
    table = np.zeros(max_index + 1, dtype=np.int64)
    for i in range(1, max_index + 1):
        table[i] = int(FxPService.round_half_away(math.atanh(2.0 ** -i) * 2.0 ** frac))
    return table


@lru_cache(maxsize=None)
def _inverse_gain(schedule: Tuple[int, ...], frac: int) -> int:
    gain = 1.0
    for i in schedule:
        gain *= math.sqrt(1.0 - 2.0 ** (-2 * i))
    return int(FxPService.round_half_away(2.0 ** frac / gain))


class CordicService:
    """Iterative CORDIC kernels.

    The ``*_ext`` and array helpers operate on int64 registers holding
    ``ext_frac`` fractional bits and are vectorized over any operand shape.
    One loop iteration models one clock cycle of the shared datapath.
    """

    @staticmethod
    def iteration_schedule(mode: CordicMode, n: int) -> List[int]:
        if n < 1:
            raise ContractViolation(f"iteration count must be >= 1, got {n}")
        if mode.coordinate == Coordinate.LINEAR:
            return list(range(1, n + 1))

        schedule = []
        i = 1
        while len(schedule) < n:
            schedule.append(i)
            if i in HYPERBOLIC_REPEATS:
                schedule.append(i)
            i += 1
        return schedule[:n]

    @staticmethod
    def hyperbolic_inverse_gain(n: int, frac: int) -> int:
        """1/K_h for the truncated schedule of length n, as a raw with ``frac`` bits."""
        schedule = tuple(CordicService.iteration_schedule(HYPERBOLIC_ROTATION, n))
        return _inverse_gain(schedule, frac)

    # Array kernels

    @staticmethod
    def rotate_linear(x, y, z, unit, n: int):
        """Linear rotation: y += x * z / unit, driving z to zero.

        The index-0 step is the operand-load multiplexer and costs no cycle.
        ``d`` is ternary so a residual that reaches zero stays there.
        """
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        z = np.asarray(z, dtype=np.int64)
        unit = np.asarray(unit, dtype=np.int64)

        d = np.where(np.abs(z) >= unit, np.sign(z), 0)
        y = y + d * x
        z = z - d * unit
        for i in range(1, n + 1):
            step = unit >> i
            d = np.where(step > 0, np.sign(z), 0)
            y = y + d * _tz_shift(x, i)
            z = z - d * step
        return y, z

    @staticmethod
    def vector_linear(x, y, z, unit, n: int):
        """Linear vectoring: z += y / x * unit, driving y to zero. Returns (z, y)."""
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        z = np.asarray(z, dtype=np.int64)
        unit = np.asarray(unit, dtype=np.int64)
        sx = np.sign(x)

        d = np.where(np.abs(y) >= np.abs(x), np.sign(y) * sx, 0)
        y = y - d * x
        z = z + d * unit
        for i in range(1, n + 1):
            step = unit >> i
            d = np.where(step > 0, np.sign(y) * sx, 0)
            y = y - d * _tz_shift(x, i)
            z = z + d * step
        return z, y

    @staticmethod
    def rotate_hyperbolic(theta, frac: int, n: int):
        """Gain-compensated hyperbolic rotation. Returns (cosh, sinh, residual)."""
        theta = np.asarray(theta, dtype=np.int64)
        schedule = CordicService.iteration_schedule(HYPERBOLIC_ROTATION, n)
        table = _atanh_table(frac, max(schedule))

        x = np.full(theta.shape, _inverse_gain(tuple(schedule), frac), dtype=np.int64)
        y = np.zeros(theta.shape, dtype=np.int64)
        z = theta
        for i in schedule:
            d = np.where(z >= 0, 1, -1)
            xs = _tz_shift(x, i)
            ys = _tz_shift(y, i)
            x, y = x + d * ys, y + d * xs
            z = z - d * table[i]
        return x, y, z

    @staticmethod
    def scaled_mac(acc, x, z, frac: int, n: int):
        """acc + x*z with all operands at ``frac`` bits, for any magnitude of z.

        z is brought into the linear domain by widening the rotation unit by a
        per-element power of two; x is widened by the same amount so the
        product needs no shift back.
        """
        z = np.asarray(z, dtype=np.int64)
        s = np.maximum(0, _bit_length(np.abs(z)) - (frac + 1))
        unit = np.int64(1) << (frac + s)
        xs = np.asarray(x, dtype=np.int64) << s
        y, _ = CordicService.rotate_linear(xs, acc, z, unit, n)
        return y

    @staticmethod
    def scaled_multiply(x, z, frac: int, n: int):
        return CordicService.scaled_mac(0, x, z, frac, n)

    @staticmethod
    def scaled_divide(num, den, out_frac: int, n: int):
        """round(num / den * 2**out_frac) through the linear vectoring core.

        The divisor is pre-shifted so the quotient lies in [0.5, 2) and the
        result is shifted back by the same amount. Works on magnitudes and
        applies the sign at the end, so the result is odd in num and den.
        """
        num = np.asarray(num, dtype=np.int64)
        den = np.asarray(den, dtype=np.int64)
        if np.any(den == 0):
            raise CordicDomainError("division by zero")

        sign = np.sign(num) * np.sign(den)
        a = np.abs(num)
        b = np.abs(den)
        p = np.maximum(0, _bit_length(a) - _bit_length(b))
        b = b << p
        w = np.maximum(0, n + _DIVIDE_HEADROOM + 1 - _bit_length(b))
        a = a << w
        b = b << w

        z, _ = CordicService.vector_linear(b, a, 0, np.int64(1) << n, n)
        q = FxPService.round_shift(z, n - out_frac - p)
        return sign * q

    # Scalar operations

    @staticmethod
    def _check_operands(cfg: CordicConfig, mode: CordicMode, *values: FxPValue):
        if cfg.mode != mode:
            raise ContractViolation(f"kernel expects {mode.name} mode, config has {cfg.mode.name}")
        for v in values:
            if v.format != cfg.format:
                raise ContractViolation(f"operand format {v.format.name} does not match {cfg.format.name}")

    @staticmethod
    def _result(cfg: CordicConfig, x, y, z) -> CordicResult:
        fmt = cfg.format
        G = cfg.guard_bits

        def out(v):
            return FxPValue(raw=int(FxPService.saturate_raw(FxPService.round_shift(v, G), fmt)), format=fmt)

        return CordicResult(
            x=out(x), y=out(y), z=out(z),
            cycles=cfg.iterations,
            y_ext=int(y), z_ext=int(z), ext_frac=cfg.ext_frac,
        )

    @staticmethod
    def linear_mac(acc: FxPValue, w: FxPValue, a: FxPValue, cfg: CordicConfig) -> CordicResult:
        """acc + w*a: x holds w, y starts at acc, z holds a."""
        CordicService._check_operands(cfg, LINEAR_ROTATION, acc, w, a)
        if abs(a.value) > LINEAR_DOMAIN:
            raise CordicDomainError(f"multiplicand {a.value} outside |a| <= {LINEAR_DOMAIN}")

        G = cfg.guard_bits
        x = np.int64(w.raw) << G
        y, z = CordicService.rotate_linear(
            x, np.int64(acc.raw) << G, np.int64(a.raw) << G, np.int64(1) << cfg.ext_frac, cfg.iterations
        )
        return CordicService._result(cfg, x, y, z)

    @staticmethod
    def linear_divide(num: FxPValue, den: FxPValue, cfg: CordicConfig) -> CordicResult:
        """num/den in z; x keeps the divisor and y the residual."""
        CordicService._check_operands(cfg, LINEAR_VECTORING, num, den)
        if den.raw == 0:
            raise CordicDomainError("division by zero")
        if abs(num.raw) > LINEAR_DOMAIN * abs(den.raw):
            raise CordicDomainError(f"quotient {num.value}/{den.value} outside |q| <= {LINEAR_DOMAIN}")

        G = cfg.guard_bits
        x = np.int64(den.raw) << G
        z, y = CordicService.vector_linear(
            x, np.int64(num.raw) << G, np.int64(0), np.int64(1) << cfg.ext_frac, cfg.iterations
        )
        return CordicService._result(cfg, x, y, z)

    @staticmethod
    def hyperbolic_rotation(theta: FxPValue, cfg: CordicConfig) -> CordicResult:
        """x = cosh(theta), y = sinh(theta), z = angle residual."""
        CordicService._check_operands(cfg, HYPERBOLIC_ROTATION, theta)
        if abs(theta.value) > HYPERBOLIC_DOMAIN:
            app_logger.debug(f"hyperbolic operand {theta.value} rejected")
            raise CordicDomainError(f"angle {theta.value} outside |theta| <= {HYPERBOLIC_DOMAIN}")

        x, y, z = CordicService.rotate_hyperbolic(
            np.int64(theta.raw) << cfg.guard_bits, cfg.ext_frac, cfg.iterations
        )
        return CordicService._result(cfg, x, y, z)
