from typing import Dict, List, Tuple
from pydantic import BaseModel, ConfigDict, Field, model_validator

NUM_SEGMENTS = 64


def ceil_log2(n: int) -> int:
    """Address bits for n distinct values; a single value needs none."""
    return (n - 1).bit_length() if n > 1 else 0


class Topology(BaseModel):
    """Compute layers only: N(l) neurons fed by J(l) inputs.

    ``chained`` enforces J(l+1) == N(l); convolution layers share weights
    across positions and relax that relation.
    """

    model_config = ConfigDict(frozen=True)

    N: List[int]
    J: List[int]
    chained: bool = True

    @model_validator(mode="after")
    def check_dims(self):
        if len(self.N) < 1 or len(self.N) != len(self.J):
            raise ValueError("N and J must be non-empty and of equal length")
        if any(n < 0 for n in self.N) or any(j < 1 for j in self.J):
            raise ValueError("layer sizes must be non-negative with at least one input")
        if self.chained:
            for l in range(len(self.N) - 1):
                if self.J[l + 1] != self.N[l]:
                    raise ValueError(f"J({l + 1}) = {self.J[l + 1]} does not match N({l}) = {self.N[l]}")
        return self

    @property
    def L(self) -> int:
        return len(self.N)

    @property
    def num_params(self) -> int:
        return sum(n * j + n for n, j in zip(self.N, self.J))


class AddressSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    layer_bits: int
    select_bits: int = 1
    payload_bits: int
    total_bits: int
    neuron_bits: List[int]
    input_bits: List[int]

    @property
    def layer_payload_bits(self) -> List[int]:
        return [n + j for n, j in zip(self.neuron_bits, self.input_bits)]

    @property
    def layer_total_bits(self) -> List[int]:
        return [self.layer_bits + self.select_bits + r for r in self.layer_payload_bits]


class ParamAddress(BaseModel):
    model_config = ConfigDict(frozen=True)

    layer: int = Field(ge=0)
    is_bias: bool
    neuron: int = Field(ge=0)
    input: int = Field(default=0, ge=0)


class ParamWrite(BaseModel):
    """One cycle of the load handshake."""

    model_config = ConfigDict(frozen=True)

    address: int
    raw: int
    valid: bool = True


class ParamMemory:
    """Segmented parameter store.

    Each of the 64 segments is a LIFO stack fed by the host; the engine
    pops them in forward order. ``entries`` is the address-indexed view.
    """

    def __init__(self, topology: Topology, spec: AddressSpec):
        self.topology = topology
        self.spec = spec
        self.segments: List[List[Tuple[int, int]]] = [[] for _ in range(NUM_SEGMENTS)]
        self.entries: Dict[int, int] = {}

    @staticmethod
    def segment_of(neuron: int) -> int:
        return neuron % NUM_SEGMENTS

    def push(self, address: int, neuron: int, raw: int):
        self.segments[self.segment_of(neuron)].append((address, raw))
        self.entries[address] = raw

    def __len__(self) -> int:
        return len(self.entries)
