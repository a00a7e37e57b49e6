import math

import numpy as np
import pytest
from pydantic import ValidationError

from corvet.models.activation import ActivationKind, AfRequest
from corvet.models.cordic import Accuracy, CordicConfig
from corvet.models.fxp import FxPValue
from corvet.services.activation_service import ActivationService, LN2
from corvet.services.fxp_service import FxPService

from .conftest import FXP8, FXP16, FXP16_F12

GRID_TOLERANCE = 2.0 ** -6


def q(x, fmt=FXP16):
    return FxPService.quantize(x, fmt)


def acc_cfg(fmt=FXP16, iterations=None):
    return CordicConfig.for_activation(fmt, Accuracy.ACCURATE, iterations)


@pytest.mark.parametrize("kind", [ActivationKind.TANH, ActivationKind.SIGMOID, ActivationKind.SWISH,
                                  ActivationKind.GELU, ActivationKind.SELU])
def test_fidelity_on_grid(kind):
    raw = FxPService.quantize_raw(np.linspace(-4.0, 4.0, 1024), FXP16_F12)
    out = ActivationService.apply_raw(raw, kind, acc_cfg(FXP16_F12))
    ref = ActivationService.reference(kind, FxPService.dequantize_raw(raw, FXP16_F12))
    assert np.max(np.abs(FxPService.dequantize_raw(out, FXP16_F12) - ref)) <= GRID_TOLERANCE


def test_softmax_sums_to_one(rng):
    cfg = acc_cfg(FXP16_F12)
    for length in list(range(1, 9)) + [16, 33, 64]:
        x = FxPService.quantize_raw(rng.uniform(-4.0, 4.0, size=(20, length)), FXP16_F12)
        out = FxPService.dequantize_raw(ActivationService.apply_raw(x, ActivationKind.SOFTMAX, cfg), FXP16_F12)
        assert np.all(np.abs(out.sum(axis=-1) - 1.0) <= 2.0 ** -8)
        assert np.all((out >= 0.0) & (out <= 1.0))


@pytest.mark.parametrize("fn, x, expected", [
    ("tanh", 1.0, math.tanh(1.0)),
    ("sigmoid", 1.0, 1.0 / (1.0 + math.exp(-1.0))),
    ("gelu", 1.0, 0.8412),
    ("gelu", -1.0, -0.1588),
    ("selu", 1.0, 1.0507),
    ("swish", 1.0, 0.7311),
])
def test_scalar_examples(fn, x, expected):
    out = getattr(ActivationService, fn)(q(x), acc_cfg())
    assert abs(out.value - expected) <= GRID_TOLERANCE


def test_fixed_points():
    cfg = acc_cfg()
    assert abs(ActivationService.sigmoid(q(0.0), cfg).value - 0.5) <= FXP16.resolution
    assert abs(ActivationService.tanh(q(0.0), cfg).value) <= FXP16.resolution
    assert ActivationService.gelu(q(0.0), cfg).raw == 0
    assert ActivationService.selu(q(0.0), cfg).raw == 0
    assert ActivationService.swish(q(0.0), cfg).raw == 0


def test_gelu_tends_to_identity():
    top = FxPValue(raw=FXP16_F12.max_raw, format=FXP16_F12)
    out = ActivationService.gelu(top, acc_cfg(FXP16_F12))
    assert abs(out.value - top.value) <= GRID_TOLERANCE


def test_relu_bypass():
    values = [q(-1.0, FXP16_F12), q(0.0, FXP16_F12), q(2.0, FXP16_F12)]
    out, report = ActivationService.apply(AfRequest(values=values, kind=ActivationKind.RELU, cfg=acc_cfg(FXP16_F12)))
    assert [v.value for v in out] == [0.0, 0.0, 2.0]
    assert report.hr_busy_cycles == 0
    assert report.cycles_total == 3


def test_softmax_examples():
    cfg = acc_cfg(FXP16_F12)
    assert [v.value for v in ActivationService.softmax([q(0.7, FXP16_F12)], cfg)] == [1.0]
    assert [v.value for v in ActivationService.softmax([q(0.0, FXP16_F12)] * 4, cfg)] == [0.25] * 4

    out = ActivationService.softmax([q(1.0, FXP16_F12), q(2.0, FXP16_F12), q(3.0, FXP16_F12)], cfg)
    for v, expected in zip(out, [0.0900, 0.2447, 0.6652]):
        assert abs(v.value - expected) <= 2.0 ** -8


@pytest.mark.parametrize("fmt", [FXP8, FXP16])
def test_output_ranges(fmt, rng):
    raw = rng.integers(fmt.min_raw, fmt.max_raw + 1, size=10_000)
    one = 1 << fmt.frac_bits
    for accuracy in Accuracy:
        cfg = CordicConfig.for_activation(fmt, accuracy)
        tanh = ActivationService.apply_raw(raw, ActivationKind.TANH, cfg)
        sigmoid = ActivationService.apply_raw(raw, ActivationKind.SIGMOID, cfg)
        assert tanh.min() >= -one and tanh.max() <= one
        assert sigmoid.min() >= 0 and sigmoid.max() <= one


@pytest.mark.parametrize("kind", [ActivationKind.TANH, ActivationKind.SIGMOID])
def test_monotone_up_to_one_ulp(kind):
    raw = np.arange(FXP8.min_raw, FXP8.max_raw + 1)
    out = ActivationService.apply_raw(raw, kind, acc_cfg(FXP8, 12))
    assert np.all(np.diff(out) >= -1)


def test_odd_symmetry_of_tanh():
    raw = np.arange(1, FXP16_F12.max_raw, 97)
    cfg = acc_cfg(FXP16_F12)
    pos = ActivationService.apply_raw(raw, ActivationKind.TANH, cfg)
    neg = ActivationService.apply_raw(-raw, ActivationKind.TANH, cfg)
    np.testing.assert_array_equal(neg, -pos)


def test_range_reduce_exp(rng):
    assert ActivationService.range_reduce_exp(0.0) == (0.0, 0)
    theta, k = ActivationService.range_reduce_exp(LN2)
    assert k == 1 and abs(theta) < 1e-15
    for x in rng.uniform(-20.0, 20.0, size=1000):
        theta, k = ActivationService.range_reduce_exp(x)
        assert abs(theta) <= LN2 / 2 + 1e-12
        assert math.isclose(math.exp(x), 2.0 ** k * math.exp(theta), rel_tol=1e-12)


def test_costs():
    tanh = ActivationService.cost(ActivationKind.TANH, 16, 10)
    assert (tanh.cycles_total, tanh.hr_busy_cycles, tanh.lv_busy_cycles) == (330, 320, 0)
    gelu = ActivationService.cost(ActivationKind.GELU, 8, 2)
    assert gelu.cycles_total == 2 * (1 + 32 + 2) and gelu.multiplier_cycles == 4
    softmax = ActivationService.cost(ActivationKind.SOFTMAX, 16, 10)
    assert softmax.cycles_total == 30 + 320
    assert softmax.lv_busy_cycles == 160 and softmax.fifo_peak_depth == 10
    assert ActivationService.cost(ActivationKind.RELU, 16, 5).cycles_total == 5
    assert ActivationService.cost(ActivationKind.SWISH, 4, 0).cycles_total == 0


def test_tanh_batch_leaves_divider_idle():
    values = [q(x, FXP16) for x in (-1.5, -0.25, 0.5, 1.25)]
    out, report = ActivationService.apply(AfRequest(values=values, kind=ActivationKind.TANH, cfg=acc_cfg()))
    assert report.lv_busy_cycles == 0
    assert report.hr_busy_cycles == 4 * 2 * 16
    assert report.utilization_hr <= 1.0
    assert [v.value for v in out] == sorted(v.value for v in out)


def test_request_formats_must_match():
    with pytest.raises(ValidationError):
        AfRequest(values=[q(0.5, FXP8)], kind=ActivationKind.TANH, cfg=acc_cfg(FXP16))
    with pytest.raises(ValidationError):
        AfRequest(values=[], kind=ActivationKind.TANH, cfg=acc_cfg(FXP16))


def test_sigmoid_symmetry_within_one_ulp():
    cfg = acc_cfg(FXP16_F12)
    raw = np.arange(-FXP16_F12.max_raw, FXP16_F12.max_raw + 1)
    pos = ActivationService.apply_raw(raw, ActivationKind.SIGMOID, cfg)
    neg = ActivationService.apply_raw(-raw, ActivationKind.SIGMOID, cfg)
    one = 1 << FXP16_F12.frac_bits
    assert np.max(np.abs(pos + neg - one)) <= 1


def test_sigmoid_is_built_from_tanh_of_half():
    cfg = acc_cfg(FXP16_F12)
    G, F, n = cfg.guard_bits, cfg.ext_frac, cfg.iterations
    raw = np.arange(FXP16_F12.min_raw, FXP16_F12.max_raw + 1, 7)
    # raw << G is even, so halving it is exact
    t = ActivationService.tanh_ext(FxPService.round_shift(raw << G, 1), F, n)
    expected = FxPService.saturate_raw(FxPService.round_shift((1 << F) + t, G + 1), FXP16_F12)
    np.testing.assert_array_equal(ActivationService.apply_raw(raw, ActivationKind.SIGMOID, cfg), expected)
