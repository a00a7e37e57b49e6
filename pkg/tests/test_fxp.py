import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corvet.core.exceptions import ConfigurationError, ContractViolation
from corvet.models.fxp import FxPFormat, FxPValue
from corvet.services.fxp_service import FxPService

from .conftest import FXP8, FXP16, Q8_4


def v(raw, fmt=FXP8):
    return FxPValue(raw=raw, format=fmt)


def test_parse_defaults_and_explicit_frac():
    assert FxPFormat.parse("fxp8") == FxPFormat(total_bits=8, frac_bits=6)
    assert FxPFormat.parse("fxp16.f12").frac_bits == 12
    assert FxPFormat.parse("fxp32").frac_bits == 20
    assert FxPFormat.parse("FXP4").name == "fxp4.f2"


@pytest.mark.parametrize("name", ["fxp12", "q8.4", "fxp8.f8", "fxp32.f30", ""])
def test_parse_rejects_unknown_formats(name):
    with pytest.raises(ConfigurationError):
        FxPFormat.parse(name)


def test_value_must_fit_format():
    with pytest.raises(ValueError):
        FxPValue(raw=128, format=FXP8)


@pytest.mark.parametrize("x, raw", [(0.0, 0), (0.25, 4), (100.0, 127), (-100.0, -128), (0.03125, 1), (-0.03125, -1)])
def test_quantize(x, raw):
    assert FxPService.quantize(x, Q8_4).raw == raw


def test_quantize_rejects_non_finite():
    with pytest.raises(ContractViolation):
        FxPService.quantize(float("nan"), Q8_4)
    with pytest.raises(ContractViolation):
        FxPService.quantize_raw([0.0, np.inf], Q8_4)


def test_add_sat():
    assert FxPService.add_sat(v(3), v(4)).raw == 7
    assert FxPService.add_sat(v(127), v(1)).raw == 127
    assert FxPService.add_sat(v(-128), v(-1)).raw == -128
    assert FxPService.sub_sat(v(-128), v(1)).raw == -128


def test_add_sat_format_mismatch():
    with pytest.raises(ContractViolation):
        FxPService.add_sat(v(1), v(1, FXP16))


@pytest.mark.parametrize("raw, k, out", [(8, 2, 2), (-8, 2, -2), (-1, 1, -1), (5, 0, 5), (-7, 1, -4)])
def test_shift_right_arith(raw, k, out):
    assert FxPService.shift_right_arith(v(raw), k).raw == out


@pytest.mark.parametrize("k", [-1, 8])
def test_shift_out_of_range(k):
    with pytest.raises(ContractViolation):
        FxPService.shift_right_arith(v(4), k)


def test_round_shift_is_half_away_from_zero():
    assert FxPService.round_shift(5, 1) == 3
    assert FxPService.round_shift(-5, 1) == -3
    assert FxPService.round_shift(4, 1) == 2
    assert FxPService.round_shift(3, -2) == 12
    np.testing.assert_array_equal(FxPService.round_shift([6, 6], [1, 2]), [3, 2])


def test_requantize_between_formats():
    src = FxPFormat(total_bits=16, frac_bits=12)
    assert FxPService.requantize_raw(100, src, FXP8) == 2
    assert FxPService.requantize_raw(32767, src, FXP8) == 127
    assert FxPService.requantize_raw(3, FXP8, src) == 192


@given(st.floats(min_value=-2.0, max_value=1.98, allow_nan=False))
@settings(max_examples=200)
def test_quantize_error_is_half_ulp_in_range(x):
    q = FxPService.quantize(x, FXP8)
    assert abs(q.value - x) <= FXP8.resolution / 2


@given(st.integers(-128, 127), st.integers(-128, 127))
@settings(max_examples=200)
def test_add_sat_matches_clipped_sum(a, b):
    assert FxPService.add_sat(v(a), v(b)).raw == min(max(a + b, -128), 127)


@pytest.mark.parametrize("fmt", [FXP8, FXP16])
def test_dequantize_then_quantize_is_identity(fmt):
    raws = np.arange(fmt.min_raw, fmt.max_raw + 1)
    np.testing.assert_array_equal(FxPService.quantize_raw(FxPService.dequantize_raw(raws, fmt), fmt), raws)


def test_quantize_is_monotone_on_dense_grid():
    for fmt in (FXP8, FXP16, Q8_4):
        assert np.all(np.diff(FxPService.quantize_raw(np.linspace(-10.0, 10.0, 200_001), fmt)) >= 0)


@given(st.floats(-4.0, 4.0, allow_nan=False), st.floats(-4.0, 4.0, allow_nan=False))
@settings(max_examples=300)
def test_quantize_preserves_order(x, y):
    lo, hi = sorted((x, y))
    assert FxPService.quantize(lo, FXP16).raw <= FxPService.quantize(hi, FXP16).raw


@given(st.integers(-32768, 32767), st.integers(-32768, 32767))
@settings(max_examples=300)
def test_add_sat_commutes(a, b):
    assert FxPService.add_sat(v(a, FXP16), v(b, FXP16)) == FxPService.add_sat(v(b, FXP16), v(a, FXP16))


@pytest.mark.parametrize("k", range(16))
def test_shift_right_arith_exhaustive_fxp16(k):
    for raw in range(FXP16.min_raw, FXP16.max_raw + 1):
        assert FxPService.shift_right_arith(v(raw, FXP16), k).raw == math.floor(raw / 2 ** k)
