import numpy as np
import pytest

from corvet.core.exceptions import ConfigurationError, SimulationError
from corvet.models.activation import ActivationKind
from corvet.models.cordic import Accuracy
from corvet.models.engine import (
    ControlState,
    ConvGeometry,
    EngineConfig,
    EventKind,
    FsmEvent,
    LayerDescriptor,
    LayerKind,
    LayerParams,
    TraceEvent,
)
from corvet.models.fxp import FxPFormat
from corvet.models.pooling import PoolWindow
from corvet.services.engine_service import EngineService
from corvet.services.fxp_service import FxPService

from .conftest import FXP8, FXP16

FXP4 = FxPFormat.default(4)


def dense(n_out, n_in, fmt=FXP8, accuracy=Accuracy.ACCURATE, activation=ActivationKind.RELU, **kw):
    return LayerDescriptor(kind=LayerKind.DENSE, n_out=n_out, n_in=n_in, format=fmt, accuracy=accuracy,
                           activation=activation, **kw)


def random_params(layers, rng, fmt=FXP8):
    return [
        LayerParams(weights=rng.integers(fmt.min_raw, fmt.max_raw + 1, size=(l.n_out, l.n_in)),
                    bias=rng.integers(-16, 16, size=l.n_out))
        for l in layers if l.has_macs
    ]


def mlp(sizes, **kw):
    return [dense(n_out, n_in, **kw) for n_in, n_out in zip(sizes[:-1], sizes[1:])]


# Packing and cycle model

@pytest.mark.parametrize("fmt, lanes", [(FXP16, 64), (FXP8, 128), (FXP4, 256), (FxPFormat.default(32), 32)])
def test_precision_pack(fmt, lanes):
    assert EngineService.precision_pack(fmt, EngineConfig()) == lanes


def test_unsupported_pe_count():
    with pytest.raises(ValueError):
        EngineConfig(num_pes=100)


def test_mac_cycle_examples():
    cfg = EngineConfig()
    assert EngineService.layer_cycles(dense(10, 32), cfg).mac_cycles == 160
    assert EngineService.layer_cycles(dense(256, 16, FXP16, Accuracy.APPROXIMATE), cfg).mac_cycles == 448


def test_cycle_breakdown_of_single_layer():
    lc = EngineService.layer_cycles(dense(10, 32, activation=ActivationKind.TANH), EngineConfig())
    af = 10 * (1 + 2 * 8)
    assert (lc.batches, lc.bias_cycles, lc.control_overhead_cycles) == (1, 1, 1)
    assert lc.af_block_cycles == af and lc.af_cycles == af
    assert lc.total_cycles == 160 + 1 + af + 1
    assert lc.macs == 320
    assert lc.hr_busy_cycles == 10 * 16


def test_bank_refill_counts_as_control():
    cfg = EngineConfig(bank_depth=16)
    lc = EngineService.layer_cycles(dense(10, 40), cfg)
    assert lc.control_overhead_cycles == 1 + 3


def test_af_overlaps_following_dense_layer():
    cfg = EngineConfig()
    first, second = dense(32, 16, activation=ActivationKind.TANH), dense(8, 32)
    hidden = EngineService.layer_cycles(first, cfg, next_layer=second)
    exposed = EngineService.layer_cycles(first, cfg)
    serial = EngineService.layer_cycles(first, EngineConfig(overlap_af=False), next_layer=second)
    assert hidden.af_cycles < exposed.af_cycles == serial.af_cycles == hidden.af_block_cycles


def test_empty_layer_costs_nothing():
    layer = dense(0, 8)
    run = EngineService.run_layer(layer, np.zeros((2, 8), dtype=np.int64),
                                  LayerParams(weights=np.zeros((0, 8)), bias=np.zeros(0)), EngineConfig())
    assert run.outputs.shape == (2, 0)
    assert run.cycles.total_cycles == 0
    assert run.state.layer_done


def test_approximate_is_cheaper_per_layer():
    cfg = EngineConfig()
    for fmt in (FXP8, FXP16):
        acc = EngineService.cycle_report([dense(64, 64, fmt)], cfg)
        approx = EngineService.cycle_report([dense(64, 64, fmt, Accuracy.APPROXIMATE)], cfg)
        assert approx.total_cycles < acc.total_cycles


def test_segment_stalls():
    # Up to four PEs share a segment on 256 PEs; only MACs shorter than that serialize
    assert EngineService.layer_cycles(dense(10, 32, FXP16), EngineConfig()).segment_stall_cycles == 0
    assert EngineService.layer_cycles(dense(256, 8, FXP16), EngineConfig(num_pes=256)).segment_stall_cycles == 0
    short = dense(256, 8, FXP16, iterations=2)
    assert EngineService.layer_cycles(short, EngineConfig(num_pes=256)).segment_stall_cycles == 8 * (4 - 2)


def test_throughput_ratio_fxp4_vs_fxp16():
    cfg = EngineConfig()
    narrow = EngineService.cycle_report(mlp([64, 512, 256], fmt=FXP4), cfg)
    wide = EngineService.cycle_report(mlp([64, 512, 256], fmt=FXP16), cfg)
    assert EngineService.precision_pack(FXP4, cfg) == 4 * EngineService.precision_pack(FXP16, cfg)
    assert narrow.total_macs == wide.total_macs
    assert narrow.effective_macs_per_cycle / wide.effective_macs_per_cycle >= 4.0


def test_cycle_report_totals():
    layers = mlp([32, 16, 10])
    report = EngineService.cycle_report(layers, EngineConfig())
    assert report.total_cycles == sum(report.per_layer_cycles)
    assert report.mac_cycles == sum(lc.mac_cycles for lc in report.per_layer)
    assert report.total_macs == 32 * 16 + 16 * 10
    assert len(report.pe_busy_cycles) == 64
    assert report.pe_busy_cycles[0] == 32 * 5 + 16 * 5
    assert report.pe_busy_cycles[-1] == 0


# Control FSM

def step(state, kind, **kw):
    return EngineService.fsm_step(state, FsmEvent(kind, **kw))


def test_fsm_walks_two_layers():
    state = ControlState.initial(64, 2)
    state = step(state, EventKind.BATCH, active=10, n_in=3)
    assert state.compute_init.sum() == 10 and not state.compute_done.any() and not state.layer_done
    for _ in range(3):
        state = step(state, EventKind.MAC)
    state = step(state, EventKind.DRAIN)
    assert state.compute_done_array and state.compute_done.sum() == 10
    state = step(state, EventKind.LAYER_DONE)
    assert state.layer_done and not state.dnn_done

    state = step(state, EventKind.ADVANCE)
    assert state.current_layer == 1 and not state.index.any() and not state.layer_done
    state = step(state, EventKind.BATCH, active=5, n_in=2)
    state = step(step(state, EventKind.MAC), EventKind.MAC)
    state = step(step(state, EventKind.DRAIN), EventKind.LAYER_DONE)
    assert state.dnn_done
    with pytest.raises(SimulationError):
        step(state, EventKind.ADVANCE)


def test_fsm_rejects_illegal_transitions():
    state = step(ControlState.initial(64, 1), EventKind.BATCH, active=4, n_in=3)
    state = step(step(state, EventKind.MAC), EventKind.DRAIN)
    assert not state.compute_done_array
    with pytest.raises(SimulationError, match="ComputeDoneArray"):
        step(state, EventKind.LAYER_DONE)
    with pytest.raises(SimulationError):
        step(ControlState.initial(64, 2), EventKind.ADVANCE)
    with pytest.raises(SimulationError):
        step(ControlState.initial(64, 1), EventKind.MAC)
    with pytest.raises(SimulationError):
        step(ControlState.initial(64, 1), EventKind.BATCH, active=65, n_in=1)

    full = step(ControlState.initial(64, 1), EventKind.BATCH, active=1, n_in=1)
    full = step(full, EventKind.MAC)
    with pytest.raises(SimulationError, match="exceeds"):
        step(full, EventKind.MAC)


def test_trace_checker_flags_orderings():
    ok = [TraceEvent(0, "CurrentLayer", 0), TraceEvent(0, "Batch", 0), TraceEvent(5, "Index", 1),
          TraceEvent(10, "Index", 2), TraceEvent(11, "ComputeDoneArray", 1), TraceEvent(12, "LayerDone", 1),
          TraceEvent(12, "DNNDone", 1)]
    assert EngineService.check_trace(ok) == []

    early = [TraceEvent(0, "CurrentLayer", 0), TraceEvent(0, "Batch", 0), TraceEvent(4, "LayerDone", 1)]
    assert "LayerDone before ComputeDoneArray" in EngineService.check_trace(early)[0]

    dnn = [TraceEvent(0, "CurrentLayer", 0), TraceEvent(1, "DNNDone", 1)]
    assert "DNNDone" in EngineService.check_trace(dnn)[0]

    index = [TraceEvent(0, "Batch", 0), TraceEvent(2, "Index", 2), TraceEvent(3, "Index", 1)]
    assert EngineService.check_trace(index)

    with pytest.raises(SimulationError):
        EngineService.assert_trace_legal(early)


# Datapath

def test_identity_layer_passes_relu_of_input(rng):
    layer = dense(6, 6)
    one = 1 << FXP8.frac_bits
    params = LayerParams(weights=np.eye(6, dtype=np.int64) * one, bias=np.zeros(6, dtype=np.int64))
    x = rng.integers(-128, 128, size=(20, 6))
    out = EngineService.run_layer(layer, x, params, EngineConfig()).outputs
    assert np.max(np.abs(out - np.maximum(x, 0))) <= 2


def test_dot_product_tracks_exact_arithmetic(rng):
    layer = dense(12, 24, FXP16, activation=ActivationKind.NONE)
    params = LayerParams(weights=rng.integers(-4000, 4000, size=(12, 24)), bias=rng.integers(-100, 100, size=12),
                         weight_shift=-1)
    x = rng.integers(-3000, 3000, size=(8, 24))
    out = EngineService.run_layer(layer, x, params, EngineConfig()).outputs
    exact = (x @ params.weights.T) / 2.0 ** FXP16.frac_bits / 2 + params.bias
    # residual |w| * 2**-n per MAC, shifter truncation, final rounding
    bound = 24 * 4000 * 2.0 ** -9 + 24 * 9 / 16 + 2
    assert np.max(np.abs(out - exact)) <= bound


def test_network_equals_layer_by_layer_composition(rng):
    layers = mlp([196, 64, 32, 32, 10])
    layers[-1] = dense(10, 32, activation=ActivationKind.NONE)
    params = random_params(layers, rng)
    x = rng.integers(0, 64, size=(3, 196))
    cfg = EngineConfig()

    run = EngineService.run_network(layers, x, params, cfg)
    manual = x
    for i, (layer, p) in enumerate(zip(layers, params)):
        nxt = layers[i + 1] if i + 1 < len(layers) else None
        manual = EngineService.run_layer(layer, manual, p, cfg, index=i, next_layer=nxt).outputs
    np.testing.assert_array_equal(run.outputs, manual)
    assert run.report.total_cycles == sum(lc.total_cycles for lc in run.report.per_layer)
    assert EngineService.check_trace(run.trace) == []
    assert run.trace[-1].signal == "DNNDone"


def test_outputs_do_not_depend_on_pe_count(rng):
    layers = mlp([40, 150, 20], fmt=FXP8)
    params = random_params(layers, rng)
    x = rng.integers(-64, 64, size=(4, 40))
    outputs = [EngineService.run_network(layers, x, params, EngineConfig(num_pes=p)).outputs for p in (64, 128, 256)]
    np.testing.assert_array_equal(outputs[0], outputs[1])
    np.testing.assert_array_equal(outputs[0], outputs[2])


def test_runs_are_deterministic(rng):
    layers = mlp([16, 24, 8], activation=ActivationKind.SIGMOID)
    params = random_params(layers, rng)
    x = rng.integers(-64, 64, size=(5, 16))
    a = EngineService.run_network(layers, x, params, EngineConfig())
    b = EngineService.run_network(layers, x, params, EngineConfig())
    np.testing.assert_array_equal(a.outputs, b.outputs)
    assert a.report == b.report
    assert a.trace == b.trace


def test_mixed_formats_requantize_between_layers(rng):
    layers = [dense(8, 8, FXP16, activation=ActivationKind.NONE), dense(4, 8, FXP8, activation=ActivationKind.NONE)]
    params = [LayerParams(weights=rng.integers(-9000, 9000, size=(8, 8)), bias=np.zeros(8, dtype=np.int64)),
              LayerParams(weights=rng.integers(-64, 64, size=(4, 8)), bias=np.zeros(4, dtype=np.int64))]
    x = rng.integers(-8000, 8000, size=(2, 8))
    run = EngineService.run_network(layers, x, params, EngineConfig())
    first = EngineService.run_layer(layers[0], x, params[0], EngineConfig()).outputs
    second = EngineService.run_layer(layers[1], FxPService.requantize_raw(first, FXP16, FXP8), params[1],
                                     EngineConfig()).outputs
    np.testing.assert_array_equal(run.outputs, second)


def test_network_topology_errors(rng):
    layers = mlp([8, 6, 4])
    params = random_params(layers, rng)
    with pytest.raises(ConfigurationError):
        EngineService.run_network(layers, np.zeros((1, 7), dtype=np.int64), params, EngineConfig())
    with pytest.raises(ConfigurationError):
        EngineService.run_network([layers[0], dense(4, 5)], np.zeros((1, 8), dtype=np.int64), params, EngineConfig())
    with pytest.raises(ConfigurationError):
        EngineService.run_network(layers, np.zeros((1, 8), dtype=np.int64), params[:1], EngineConfig())


def test_conv_pool_network(rng):
    geom = ConvGeometry(in_channels=1, height=6, width=6, kernel_h=3, kernel_w=3)
    conv = LayerDescriptor(kind=LayerKind.CONV, n_out=2, n_in=9, format=FXP8, accuracy=Accuracy.ACCURATE,
                           activation=ActivationKind.RELU, conv=geom)
    pool = LayerDescriptor(kind=LayerKind.POOL, n_out=2 * 2 * 2, n_in=2 * 4 * 4, format=FXP8,
                           accuracy=Accuracy.ACCURATE, pool=PoolWindow(window_h=2, window_w=2, stride=2),
                           normalize=True, in_shape=(2, 4, 4))
    head = dense(3, 8, activation=ActivationKind.NONE)
    params = [LayerParams(weights=rng.integers(-64, 64, size=(2, 9)), bias=np.zeros(2, dtype=np.int64)),
              LayerParams(weights=rng.integers(-64, 64, size=(3, 8)), bias=np.zeros(3, dtype=np.int64))]
    run = EngineService.run_network([conv, pool, head], rng.integers(0, 64, size=(2, 36)), params, EngineConfig())
    assert run.outputs.shape == (2, 3)
    assert run.report.per_layer[1].pool_cycles == 8 * (4 + 12)
    assert run.report.per_layer[0].macs == 2 * 16 * 9
    assert EngineService.check_trace(run.trace) == []


def test_im2col_matches_direct_convolution(rng):
    g = ConvGeometry(in_channels=2, height=5, width=4, kernel_h=2, kernel_w=3, stride=1)
    x = rng.normal(size=(3, g.input_size))
    w = rng.normal(size=(4, g.patch_size))
    patches = EngineService.im2col(x, g)
    assert patches.shape == (3 * g.positions, g.patch_size)
    maps = x.reshape(3, 2, 5, 4)
    direct = np.einsum("bchw,ochw->bo", maps[:, :, 1:3, 0:3], w.reshape(4, 2, 2, 3))
    np.testing.assert_allclose((patches @ w.T).reshape(3, g.positions, 4)[:, g.out_w * 1 + 0], direct)
