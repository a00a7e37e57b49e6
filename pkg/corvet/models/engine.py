from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, model_validator
import numpy as np

from .activation import ActivationKind
from .cordic import Accuracy, MAC_CYCLE_TABLE
from .fxp import FxPFormat
from .pooling import PoolWindow

SUPPORTED_PES = (64, 128, 256)


class LayerKind(str, Enum):
    DENSE = "dense"
    CONV = "conv"
    POOL = "pool"
    ACTIVATION = "activation-only"


class EngineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_pes: int = 64
    bank_depth: int = Field(default=32, ge=1)
    default_format: FxPFormat = FxPFormat.default(8)
    default_accuracy: Accuracy = Accuracy.ACCURATE
    overlap_af: bool = True

    @model_validator(mode="after")
    def check_pes(self):
        if self.num_pes not in SUPPORTED_PES:
            raise ValueError(f"num_pes must be one of {SUPPORTED_PES}, got {self.num_pes}")
        return self


class ConvGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_channels: int = Field(ge=1)
    height: int = Field(ge=1)
    width: int = Field(ge=1)
    kernel_h: int = Field(ge=1)
    kernel_w: int = Field(ge=1)
    stride: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_fit(self):
        if self.kernel_h > self.height or self.kernel_w > self.width:
            raise ValueError("kernel larger than the input map")
        return self

    @property
    def out_h(self) -> int:
        return (self.height - self.kernel_h) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.width - self.kernel_w) // self.stride + 1

    @property
    def positions(self) -> int:
        return self.out_h * self.out_w

    @property
    def patch_size(self) -> int:
        return self.in_channels * self.kernel_h * self.kernel_w

    @property
    def input_size(self) -> int:
        return self.in_channels * self.height * self.width


class LayerDescriptor(BaseModel):
    """One layer as the engine sees it.

    Dense: n_out neurons over n_in inputs. Conv: n_out output channels over
    patches of n_in = C*kh*kw values at every position. Pool and
    activation-only layers carry no parameters; for pool layers
    ``in_shape`` is (C, H, W) and n_out is the flattened pooled size.
    """

    model_config = ConfigDict(frozen=True)

    kind: LayerKind
    n_out: int = Field(ge=0)
    n_in: int = Field(ge=0)
    format: FxPFormat
    accuracy: Accuracy
    activation: ActivationKind = ActivationKind.NONE
    pool: Optional[PoolWindow] = None
    normalize: bool = False
    iterations: Optional[int] = Field(default=None, ge=1)
    af_iterations: Optional[int] = Field(default=None, ge=1)
    conv: Optional[ConvGeometry] = None
    in_shape: Optional[Tuple[int, int, int]] = None

    @model_validator(mode="after")
    def check_layer(self):
        if self.kind in (LayerKind.DENSE, LayerKind.CONV) and self.iterations is None:
            if (self.format.total_bits, self.accuracy) not in MAC_CYCLE_TABLE:
                raise ValueError(
                    f"{self.format.name} has no {self.accuracy.value} cycle-table entry; set iterations"
                )
        if self.kind == LayerKind.CONV:
            if self.conv is None:
                raise ValueError("conv layers need a geometry")
            if self.n_in != self.conv.patch_size:
                raise ValueError(f"conv n_in {self.n_in} != patch size {self.conv.patch_size}")
        if self.kind == LayerKind.POOL:
            if self.pool is None or self.in_shape is None:
                raise ValueError("pool layers need a window and an input shape")
            c, h, w = self.in_shape
            oh, ow = self.pool.output_shape(h, w)
            if self.n_in != c * h * w or self.n_out != c * oh * ow:
                raise ValueError("pool layer sizes do not match its input shape and window")
        if self.kind == LayerKind.ACTIVATION and self.n_in != self.n_out:
            raise ValueError("activation-only layers keep their width")
        return self

    @property
    def has_macs(self) -> bool:
        return self.kind in (LayerKind.DENSE, LayerKind.CONV)

    @property
    def positions(self) -> int:
        return self.conv.positions if self.kind == LayerKind.CONV else 1

    @property
    def n_dot(self) -> int:
        """Dot products issued: one per neuron and position."""
        return self.n_out * self.positions if self.has_macs else 0

    @property
    def input_size(self) -> int:
        return self.conv.input_size if self.kind == LayerKind.CONV else self.n_in

    @property
    def output_size(self) -> int:
        return self.n_dot if self.has_macs else self.n_out


@dataclass(frozen=True)
class LayerParams:
    """Raw weights (n_out, n_in) and biases in the layer format, with power-of-two scales."""

    weights: np.ndarray
    bias: np.ndarray
    weight_shift: int = 0
    bias_shift: int = 0


class EventKind(str, Enum):
    BATCH = "batch"
    MAC = "mac"
    DRAIN = "drain"
    LAYER_DONE = "layer_done"
    ADVANCE = "advance"


@dataclass(frozen=True)
class FsmEvent:
    kind: EventKind
    active: int = 0
    n_in: int = 0


@dataclass(frozen=True)
class ControlState:
    """Status signals of the control FSM; per-PE fields are arrays of length num_pes."""

    num_layers: int
    current_layer: int
    layer_done: bool
    dnn_done: bool
    compute_init: np.ndarray
    index: np.ndarray
    compute_done: np.ndarray
    compute_done_array: bool
    n_in: int = 0
    batch: int = -1

    @classmethod
    def initial(cls, num_pes: int, num_layers: int) -> "ControlState":
        return cls(
            num_layers=num_layers,
            current_layer=0,
            layer_done=False,
            dnn_done=False,
            compute_init=np.zeros(num_pes, dtype=bool),
            index=np.zeros(num_pes, dtype=np.int64),
            compute_done=np.zeros(num_pes, dtype=bool),
            compute_done_array=False,
        )

    def evolve(self, **changes) -> "ControlState":
        return replace(self, **changes)


class TraceEvent(NamedTuple):
    cycle: int
    signal: str
    value: int
