from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import numpy as np

from .activation import ActivationKind
from .cordic import Accuracy
from .engine import ConvGeometry, LayerKind, LayerParams
from .fxp import FxPFormat
from .memory import AddressSpec, ParamWrite, Topology
from .pooling import PoolWindow


@dataclass
class LayerSpec:
    """One ingested layer with its float parameters (dense and conv only)."""

    kind: LayerKind
    n_out: int
    n_in: int
    activation: ActivationKind = ActivationKind.NONE
    format: Optional[FxPFormat] = None
    accuracy: Optional[Accuracy] = None
    iterations: Optional[int] = None
    af_iterations: Optional[int] = None
    conv: Optional[ConvGeometry] = None
    pool: Optional[PoolWindow] = None
    normalize: bool = False
    in_shape: Optional[Tuple[int, int, int]] = None
    out_shape: Optional[Tuple[int, int, int]] = None
    weights: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None

    @property
    def has_macs(self) -> bool:
        return self.kind in (LayerKind.DENSE, LayerKind.CONV)


@dataclass
class ModelSpec:
    name: str
    input_dim: int
    layers: List[LayerSpec]
    input_shape: Optional[Tuple[int, int, int]] = None

    @property
    def compute_layers(self) -> List[LayerSpec]:
        return [layer for layer in self.layers if layer.has_macs]

    @property
    def topology(self) -> Topology:
        compute = self.compute_layers
        # Conv and pool layers reshape between compute layers, so J no longer chains
        chained = all(layer.kind in (LayerKind.DENSE, LayerKind.ACTIVATION) for layer in self.layers)
        return Topology(N=[l.n_out for l in compute], J=[l.n_in for l in compute], chained=chained)


@dataclass
class QuantizedModel:
    """Raw parameters per compute layer plus the host write stream that loads them."""

    name: str
    formats: List[FxPFormat]
    params: List[LayerParams]
    topology: Topology
    addr_spec: AddressSpec
    stream: List[ParamWrite] = field(default_factory=list)


@dataclass
class Dataset:
    name: str
    samples: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.name, self.samples[indices], self.labels[indices], self.num_classes)
