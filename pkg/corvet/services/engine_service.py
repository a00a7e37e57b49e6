from dataclasses import dataclass, field
from math import ceil
from typing import List, Optional, Sequence
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core.config import settings
from ..core.exceptions import ConfigurationError, ContractViolation, CordicDomainError, SimulationError
from ..core.logging import app_logger
from ..models.activation import ActivationKind, AfReport, DATAPATH, Datapath
from ..models.cordic import CordicConfig, activation_iterations, mac_cycles
from ..models.engine import (
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
from ..models.fxp import FxPFormat
from ..models.memory import NUM_SEGMENTS, ceil_log2
from ..schemas.schemas import CycleReport, LayerCycles
from .activation_service import ActivationService
from .cordic_service import CordicService
from .fxp_service import FxPService
from .pooling_service import PoolingService

# Width of one PE datapath word; narrower formats pack sub-lanes into it
PE_WORD_BITS = 16


@dataclass
class LayerRun:
    outputs: np.ndarray
    cycles: LayerCycles
    state: ControlState
    trace: List[TraceEvent] = field(default_factory=list)


@dataclass
class NetworkRun:
    outputs: np.ndarray
    report: CycleReport
    trace: List[TraceEvent]
    layer_outputs: List[np.ndarray] = field(default_factory=list)


class EngineService:
    """Lane-based vector engine: control FSM, dot-product lanes and cycle accounting.

    Values are computed for a whole batch of samples at once (leading axis of
    the inputs); cycle figures are per inference and do not depend on data.
    """

    # Packing and per-layer cycle model

    @staticmethod
    def precision_pack(fmt: FxPFormat, cfg: EngineConfig) -> int:
        """Effective MAC lanes: narrow formats pack into the 16-bit PE word.

        fxp32 is a reference width and takes two PEs per lane.
        """
        if fmt.total_bits > PE_WORD_BITS:
            return cfg.num_pes * PE_WORD_BITS // fmt.total_bits
        return cfg.num_pes * (PE_WORD_BITS // fmt.total_bits)

    @staticmethod
    def cycles_per_mac(layer: LayerDescriptor) -> int:
        if not layer.has_macs:
            return 0
        return mac_cycles(layer.format, layer.accuracy, layer.iterations)

    @staticmethod
    def af_iterations(layer: LayerDescriptor) -> int:
        if DATAPATH[layer.activation] == Datapath.BYPASS:
            return 0
        return activation_iterations(layer.format, layer.accuracy, layer.af_iterations)

    @staticmethod
    def af_block(layer: LayerDescriptor) -> AfReport:
        return ActivationService.cost(layer.activation, EngineService.af_iterations(layer), layer.output_size)

    @staticmethod
    def batches(layer: LayerDescriptor, cfg: EngineConfig) -> int:
        return ceil(layer.n_dot / EngineService.precision_pack(layer.format, cfg))

    @staticmethod
    def _segment_stalls(layer: LayerDescriptor, cfg: EngineConfig, c: int) -> int:
        # Distinct PEs reading one segment in the same MAC step beyond c serialize
        lanes = EngineService.precision_pack(layer.format, cfg)
        stalls = 0
        for b in range(EngineService.batches(layer, cfg)):
            k = np.arange(b * lanes, min((b + 1) * lanes, layer.n_dot))
            pe = (k - b * lanes) % cfg.num_pes
            seg = (k % layer.n_out) % NUM_SEGMENTS
            pairs = np.unique(seg * cfg.num_pes + pe)
            share = int(np.bincount(pairs // cfg.num_pes).max())
            stalls += layer.n_in * max(0, share - c)
        return stalls

    @staticmethod
    def _af_exposed(
        layer: LayerDescriptor, cfg: EngineConfig, block: AfReport, next_layer: Optional[LayerDescriptor]
    ) -> int:
        if block.cycles_total == 0:
            return 0
        if not (cfg.overlap_af and layer.has_macs) or layer.activation == ActivationKind.SOFTMAX:
            return block.cycles_total

        lanes = EngineService.precision_pack(layer.format, cfg)
        batches = EngineService.batches(layer, cfg)
        a = block.cycles_total // layer.output_size
        c = EngineService.cycles_per_mac(layer)

        # Each full batch's AF runs under the next batch's MACs
        exposed = (batches - 1) * max(0, lanes * a - layer.n_in * c)

        base = (batches - 1) * lanes
        cnt = layer.n_dot - base
        if next_layer is not None and next_layer.kind == LayerKind.DENSE and next_layer.n_dot > 0:
            # The next dense layer reads input j at j * c_next; the tail only
            # waits for outputs that are not ready by then
            c_next = EngineService.cycles_per_mac(next_layer)
            exposed += max(0, a - base * c_next, cnt * a - (base + cnt - 1) * c_next)
        else:
            exposed += cnt * a
        return exposed

    @staticmethod
    def layer_cycles(
        layer: LayerDescriptor, cfg: EngineConfig, index: int = 0, next_layer: Optional[LayerDescriptor] = None
    ) -> LayerCycles:
        lanes = EngineService.precision_pack(layer.format, cfg)
        c = EngineService.cycles_per_mac(layer)
        batches = EngineService.batches(layer, cfg)
        block = EngineService.af_block(layer)

        refill = 0
        if layer.has_macs and layer.n_in > cfg.bank_depth:
            refill = batches * ceil(layer.n_in / cfg.bank_depth)
        pool = 0
        if layer.kind == LayerKind.POOL and layer.n_out > 0:
            pool = PoolingService.cost(layer.pool, layer.format, layer.n_out)

        mac = batches * layer.n_in * c
        bias = batches
        af = EngineService._af_exposed(layer, cfg, block, next_layer)
        control = (1 if layer.output_size > 0 else 0) + refill
        stalls = EngineService._segment_stalls(layer, cfg, c) if batches else 0

        return LayerCycles(
            layer=index,
            kind=layer.kind.value,
            format=layer.format.name,
            accuracy=layer.accuracy.value,
            lanes=lanes,
            batches=batches,
            cycles_per_mac=c,
            mac_cycles=mac,
            bias_cycles=bias,
            af_cycles=af,
            af_block_cycles=block.cycles_total,
            pool_cycles=pool,
            control_overhead_cycles=control,
            segment_stall_cycles=stalls,
            total_cycles=mac + bias + af + pool + control + stalls,
            macs=layer.n_dot * layer.n_in,
            lane_occupancy=layer.n_dot / (batches * lanes) if batches else 0.0,
            hr_busy_cycles=block.hr_busy_cycles,
            lv_busy_cycles=block.lv_busy_cycles,
            fifo_peak_depth=block.fifo_peak_depth,
        )

    @staticmethod
    def pe_busy(layer: LayerDescriptor, cfg: EngineConfig) -> np.ndarray:
        """MAC cycles per PE; deactivated PEs stay at zero."""
        busy = np.zeros(cfg.num_pes, dtype=np.int64)
        lanes = EngineService.precision_pack(layer.format, cfg)
        c = EngineService.cycles_per_mac(layer)
        for b in range(EngineService.batches(layer, cfg)):
            cnt = min(lanes, layer.n_dot - b * lanes)
            busy[:min(cnt, cfg.num_pes)] += layer.n_in * c
        return busy

    @staticmethod
    def cycle_report(layers: Sequence[LayerDescriptor], cfg: EngineConfig) -> CycleReport:
        per_layer = []
        busy = np.zeros(cfg.num_pes, dtype=np.int64)
        slots = 0
        dots = 0
        for i, layer in enumerate(layers):
            nxt = layers[i + 1] if i + 1 < len(layers) else None
            lc = EngineService.layer_cycles(layer, cfg, index=i, next_layer=nxt)
            per_layer.append(lc)
            busy += EngineService.pe_busy(layer, cfg)
            slots += lc.batches * lc.lanes
            dots += layer.n_dot

        def total(name: str) -> int:
            return sum(getattr(lc, name) for lc in per_layer)

        cycles = total("total_cycles")
        macs = total("macs")
        block = total("af_block_cycles")
        return CycleReport(
            per_layer=per_layer,
            per_layer_cycles=[lc.total_cycles for lc in per_layer],
            mac_cycles=total("mac_cycles"),
            bias_cycles=total("bias_cycles"),
            af_cycles=total("af_cycles"),
            af_block_cycles=block,
            pool_cycles=total("pool_cycles"),
            control_overhead_cycles=total("control_overhead_cycles"),
            segment_stall_cycles=total("segment_stall_cycles"),
            total_cycles=cycles,
            total_macs=macs,
            lane_occupancy=dots / slots if slots else 0.0,
            effective_macs_per_cycle=macs / cycles if cycles else 0.0,
            mac_throughput=macs / total("mac_cycles") if total("mac_cycles") else 0.0,
            af_hr_utilization=total("hr_busy_cycles") / block if block else 0.0,
            af_lv_utilization=total("lv_busy_cycles") / block if block else 0.0,
            pe_busy_cycles=busy.tolist(),
        )

    # Control FSM

    @staticmethod
    def fsm_step(state: ControlState, event: FsmEvent) -> ControlState:
        def illegal(msg: str):
            return SimulationError(f"illegal {event.kind.value} transition: {msg}", layer=state.current_layer)

        if state.dnn_done:
            raise illegal("network already done")

        if event.kind == EventKind.BATCH:
            if state.layer_done:
                raise illegal("layer already done")
            if state.batch >= 0 and not state.compute_done_array:
                raise illegal("previous batch has not drained")
            num_pes = len(state.compute_init)
            if not 0 <= event.active <= num_pes:
                raise illegal(f"{event.active} active PEs on a {num_pes}-PE array")
            return state.evolve(
                batch=state.batch + 1,
                n_in=event.n_in,
                compute_init=np.arange(num_pes) < event.active,
                index=np.zeros(num_pes, dtype=np.int64),
                compute_done=np.zeros(num_pes, dtype=bool),
                compute_done_array=False,
            )

        if event.kind == EventKind.MAC:
            if state.batch < 0 or state.layer_done or state.compute_done_array:
                raise illegal("no batch in flight")
            if not state.compute_init.any():
                raise illegal("no active PE")
            index = state.index + state.compute_init
            if index.max() > state.n_in:
                raise illegal(f"Index {int(index.max())} exceeds J = {state.n_in}")
            return state.evolve(index=index)

        if event.kind == EventKind.DRAIN:
            if state.batch < 0:
                raise illegal("no batch in flight")
            done = state.compute_init & (state.index == state.n_in)
            return state.evolve(compute_done=done, compute_done_array=bool(np.all(done[state.compute_init])))

        if event.kind == EventKind.LAYER_DONE:
            if state.layer_done:
                raise illegal("layer already done")
            if not state.compute_done_array:
                raise illegal("ComputeDoneArray not asserted")
            return state.evolve(layer_done=True, dnn_done=state.current_layer == state.num_layers - 1)

        if event.kind == EventKind.ADVANCE:
            if not state.layer_done:
                raise illegal("current layer not done")
            nxt = ControlState.initial(len(state.compute_init), state.num_layers)
            return nxt.evolve(current_layer=state.current_layer + 1)

        raise illegal("unknown event")

    @staticmethod
    def _drive_layer(
        layer: LayerDescriptor, cfg: EngineConfig, state: ControlState, cycle0: int, total: int
    ):
        """Replay one layer through the FSM and record its status signals."""
        t = cycle0
        trace = [TraceEvent(t, "CurrentLayer", state.current_layer)]
        lanes = EngineService.precision_pack(layer.format, cfg)
        batches = EngineService.batches(layer, cfg)
        c = EngineService.cycles_per_mac(layer)
        n_in = layer.n_in if batches else 0
        refill = layer.has_macs and layer.n_in > cfg.bank_depth

        for b in range(max(batches, 1)):
            active = min(lanes, layer.n_dot - b * lanes, cfg.num_pes) if batches else 0
            state = EngineService.fsm_step(state, FsmEvent(EventKind.BATCH, active=active, n_in=n_in))
            trace.append(TraceEvent(t, "Batch", b))
            trace.append(TraceEvent(t, "ComputeInit", int(state.compute_init.sum())))
            for j in range(n_in):
                if refill and j % cfg.bank_depth == 0:
                    t += 1
                state = EngineService.fsm_step(state, FsmEvent(EventKind.MAC))
                t += c
                trace.append(TraceEvent(t, "Index", int(state.index.max())))
            if batches:
                # Bias add on the accumulator port
                t += 1
            state = EngineService.fsm_step(state, FsmEvent(EventKind.DRAIN))
            trace.append(TraceEvent(t, "ComputeDone", int(state.compute_done.sum())))
            trace.append(TraceEvent(t, "ComputeDoneArray", int(state.compute_done_array)))

        state = EngineService.fsm_step(state, FsmEvent(EventKind.LAYER_DONE))
        end = max(t, cycle0 + total)
        trace.append(TraceEvent(end, "LayerDone", 1))
        if state.dnn_done:
            trace.append(TraceEvent(end, "DNNDone", 1))
        return state, trace

    @staticmethod
    def check_trace(trace: Sequence[TraceEvent]) -> List[str]:
        """Ordering violations in a signal trace; empty when the trace is legal."""
        problems = []
        last_cycle = None
        cda = False
        layer_done = False
        last_index = None
        for i, ev in enumerate(trace):
            if last_cycle is not None and ev.cycle < last_cycle:
                problems.append(f"event {i}: cycle {ev.cycle} after {last_cycle}")
            last_cycle = ev.cycle

            if ev.signal == "CurrentLayer":
                cda = False
                layer_done = False
                last_index = None
            elif ev.signal == "Batch":
                cda = False
                last_index = None
            elif ev.signal == "Index":
                if last_index is not None and ev.value <= last_index:
                    problems.append(f"event {i}: Index {ev.value} after {last_index}")
                last_index = ev.value
            elif ev.signal == "ComputeDoneArray":
                cda = bool(ev.value)
            elif ev.signal == "LayerDone":
                if not cda:
                    problems.append(f"event {i}: LayerDone before ComputeDoneArray")
                layer_done = True
            elif ev.signal == "DNNDone":
                if not layer_done:
                    problems.append(f"event {i}: DNNDone before the final LayerDone")
        return problems

    @staticmethod
    def assert_trace_legal(trace: Sequence[TraceEvent]):
        problems = EngineService.check_trace(trace)
        if problems:
            app_logger.error(f"Signal trace has {len(problems)} illegal orderings")
            raise SimulationError(problems[0])

    # Datapath

    @staticmethod
    def _dot(a: np.ndarray, p: LayerParams, layer: LayerDescriptor) -> np.ndarray:
        """Dot products of rows of ``a`` (M, J) with every neuron, in the layer format."""
        fmt = layer.format
        G = settings.GUARD_BITS
        F = fmt.frac_bits + G
        n = EngineService.cycles_per_mac(layer)

        # Inputs with more integer bits are brought into |a| <= 2 by a wider unit
        s_a = max(0, fmt.int_bits - 2)
        unit = np.int64(1) << (F + s_a)
        w_ext = (np.asarray(p.weights, dtype=np.int64) << G) << s_a
        a_ext = np.asarray(a, dtype=np.int64) << G

        acc_bits = fmt.total_bits + G + ceil_log2(layer.n_in)
        lo, hi = -(1 << (acc_bits - 1)), (1 << (acc_bits - 1)) - 1
        y = np.zeros((a.shape[0], layer.n_out), dtype=np.int64)
        for j in range(layer.n_in):
            y, _ = CordicService.rotate_linear(w_ext[None, :, j], y, a_ext[:, j, None], unit, n)
            y = np.clip(y, lo, hi)

        y = FxPService.round_shift(y, -p.weight_shift)
        bias = FxPService.round_shift(np.asarray(p.bias, dtype=np.int64) << G, -p.bias_shift)
        return FxPService.saturate_raw(FxPService.round_shift(y + bias[None, :], G), fmt)

    @staticmethod
    def im2col(x: np.ndarray, g: ConvGeometry) -> np.ndarray:
        """Patches of shape (batch * positions, C * kh * kw) from flattened (C, H, W) maps."""
        maps = x.reshape(-1, g.in_channels, g.height, g.width)
        views = sliding_window_view(maps, (g.kernel_h, g.kernel_w), axis=(2, 3))[:, :, ::g.stride, ::g.stride]
        # (B, C, oh, ow, kh, kw) -> (B, oh, ow, C, kh, kw)
        patches = views.transpose(0, 2, 3, 1, 4, 5)
        return patches.reshape(-1, g.patch_size)

    @staticmethod
    def _mac_outputs(x: np.ndarray, p: LayerParams, layer: LayerDescriptor) -> np.ndarray:
        if layer.kind == LayerKind.DENSE:
            return EngineService._dot(x, p, layer)
        out = EngineService._dot(EngineService.im2col(x, layer.conv), p, layer)
        batch = x.shape[0]
        # Channel-major (C_out, oh, ow) per sample
        return out.reshape(batch, layer.positions, layer.n_out).transpose(0, 2, 1).reshape(batch, -1)

    @staticmethod
    def _activate(raw: np.ndarray, layer: LayerDescriptor) -> np.ndarray:
        kind = layer.activation
        if kind == ActivationKind.NONE:
            return raw
        if kind == ActivationKind.RELU:
            return np.maximum(raw, 0)
        cfg = CordicConfig.for_activation(layer.format, layer.accuracy, layer.af_iterations)
        return ActivationService.apply_raw(raw, kind, cfg)

    @staticmethod
    def _check_params(layer: LayerDescriptor, p: Optional[LayerParams]):
        if not layer.has_macs:
            return
        if p is None:
            raise ConfigurationError(f"{layer.kind.value} layer has no parameters")
        if np.shape(p.weights) != (layer.n_out, layer.n_in) or np.shape(p.bias) != (layer.n_out,):
            raise ConfigurationError(
                f"parameter shapes {np.shape(p.weights)}/{np.shape(p.bias)} do not match "
                f"{layer.n_out}x{layer.n_in}"
            )

    @staticmethod
    def run_layer(
        layer: LayerDescriptor,
        inputs,
        params: Optional[LayerParams],
        cfg: EngineConfig,
        index: int = 0,
        next_layer: Optional[LayerDescriptor] = None,
        state: Optional[ControlState] = None,
        cycle0: int = 0,
    ) -> LayerRun:
        """Execute one layer on raws of shape (batch, input_size) in the layer format."""
        x = np.asarray(inputs, dtype=np.int64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != layer.input_size:
            raise ConfigurationError(f"layer {index} expects {layer.input_size} inputs, got {x.shape[-1]}")
        EngineService._check_params(layer, params)

        if layer.has_macs:
            out = EngineService._mac_outputs(x, params, layer)
        elif layer.kind == LayerKind.POOL:
            pooled = PoolingService.pool_raw(x.reshape((x.shape[0],) + tuple(layer.in_shape)), layer.pool,
                                             layer.format)
            if layer.normalize:
                pooled, _ = PoolingService.normalize_raw(pooled, layer.format, axes=(1, 2, 3))
            out = pooled.reshape(x.shape[0], -1)
        else:
            out = x.copy()
        if out.shape[-1] > 0:
            out = EngineService._activate(out, layer)

        cycles = EngineService.layer_cycles(layer, cfg, index=index, next_layer=next_layer)
        if state is None:
            state = ControlState.initial(cfg.num_pes, 1)
        state, trace = EngineService._drive_layer(layer, cfg, state, cycle0, cycles.total_cycles)
        app_logger.debug(f"Layer {index} ({layer.kind.value}, {layer.format.name}) took {cycles.total_cycles} cycles")
        return LayerRun(outputs=out, cycles=cycles, state=state, trace=trace)

    @staticmethod
    def validate_network(layers: Sequence[LayerDescriptor], input_size: int, params: Sequence[LayerParams]):
        if not layers:
            raise ConfigurationError("network has no layers")
        if input_size != layers[0].input_size:
            raise ConfigurationError(f"network expects {layers[0].input_size} inputs, got {input_size}")
        for i in range(1, len(layers)):
            if layers[i].input_size != layers[i - 1].output_size:
                raise ConfigurationError(
                    f"layer {i} expects {layers[i].input_size} inputs but layer {i - 1} "
                    f"produces {layers[i - 1].output_size}"
                )
        compute = [layer for layer in layers if layer.has_macs]
        if len(params) != len(compute):
            raise ConfigurationError(f"{len(params)} parameter sets for {len(compute)} compute layers")
        for layer, p in zip(compute, params):
            EngineService._check_params(layer, p)

    @staticmethod
    def run_network(
        layers: Sequence[LayerDescriptor], inputs, params: Sequence[LayerParams], cfg: EngineConfig
    ) -> NetworkRun:
        """Layer-multiplexed execution of raws in the first layer's format.

        ``params`` lists one LayerParams per dense or conv layer, in order.
        Outputs are in the last layer's format.
        """
        x = np.asarray(inputs, dtype=np.int64)
        if x.ndim == 1:
            x = x[None, :]
        EngineService.validate_network(layers, x.shape[-1], params)

        compute = iter(params)
        state = ControlState.initial(cfg.num_pes, len(layers))
        trace: List[TraceEvent] = []
        per_layer: List[np.ndarray] = []
        t = 0
        fmt = layers[0].format
        for i, layer in enumerate(layers):
            nxt = layers[i + 1] if i + 1 < len(layers) else None
            x = FxPService.requantize_raw(x, fmt, layer.format)
            fmt = layer.format
            p = next(compute) if layer.has_macs else None
            try:
                run = EngineService.run_layer(layer, x, p, cfg, index=i, next_layer=nxt, state=state, cycle0=t)
            except (CordicDomainError, ContractViolation) as e:
                app_logger.error(f"Error executing layer {i}: {str(e)}")
                raise SimulationError(str(e), layer=i) from e
            x = run.outputs
            per_layer.append(x)
            trace.extend(run.trace)
            t += run.cycles.total_cycles
            state = run.state
            if nxt is not None:
                state = EngineService.fsm_step(state, FsmEvent(EventKind.ADVANCE))

        if not state.dnn_done:
            raise SimulationError("DNNDone not asserted after the final layer", layer=len(layers) - 1)
        EngineService.assert_trace_legal(trace)
        return NetworkRun(
            outputs=x, report=EngineService.cycle_report(layers, cfg), trace=trace, layer_outputs=per_layer
        )
