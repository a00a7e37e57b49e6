from enum import Enum
from typing import Optional
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.config import settings
from ..core.exceptions import ConfigurationError
from .fxp import FxPFormat, FxPValue


class Coordinate(str, Enum):
    LINEAR = "linear"
    HYPERBOLIC = "hyperbolic"


class Direction(str, Enum):
    ROTATION = "rotation"
    VECTORING = "vectoring"


class Accuracy(str, Enum):
    APPROXIMATE = "approximate"
    ACCURATE = "accurate"


class CordicMode(BaseModel):
    model_config = ConfigDict(frozen=True)

    coordinate: Coordinate
    direction: Direction

    @model_validator(mode="after")
    def check_combination(self):
        if self.coordinate == Coordinate.HYPERBOLIC and self.direction == Direction.VECTORING:
            raise ValueError("hyperbolic vectoring is not part of the datapath")
        return self

    @property
    def name(self) -> str:
        return f"{self.coordinate.value}-{self.direction.value}"


LINEAR_ROTATION = CordicMode(coordinate=Coordinate.LINEAR, direction=Direction.ROTATION)
LINEAR_VECTORING = CordicMode(coordinate=Coordinate.LINEAR, direction=Direction.VECTORING)
HYPERBOLIC_ROTATION = CordicMode(coordinate=Coordinate.HYPERBOLIC, direction=Direction.ROTATION)

# Iterations (== cycles) of one linear MAC per (total_bits, accuracy)
MAC_CYCLE_TABLE = {
    (8, Accuracy.APPROXIMATE): 4,
    (8, Accuracy.ACCURATE): 5,
    (16, Accuracy.APPROXIMATE): 7,
    (16, Accuracy.ACCURATE): 9,
    (4, Accuracy.ACCURATE): 4,
}

# Activation depth beyond the MAC table entry in approximate mode
AF_EXTRA_ITERATIONS = 3


def mac_cycles(fmt: FxPFormat, accuracy: Accuracy, iterations: Optional[int] = None) -> int:
    """Cycles of one linear MAC; an explicit override wins over the table."""
    if iterations is not None:
        return iterations
    key = (fmt.total_bits, Accuracy(accuracy))
    if key not in MAC_CYCLE_TABLE:
        raise ConfigurationError(
            f"no cycle-table entry for {fmt.name} {Accuracy(accuracy).value}; give an explicit iterations override"
        )
    return MAC_CYCLE_TABLE[key]


def activation_iterations(fmt: FxPFormat, accuracy: Accuracy, iterations: Optional[int] = None) -> int:
    if iterations is not None:
        return iterations
    if Accuracy(accuracy) == Accuracy.ACCURATE:
        return fmt.total_bits
    return mac_cycles(fmt, Accuracy.APPROXIMATE) + AF_EXTRA_ITERATIONS


class CordicConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: CordicMode
    accuracy: Accuracy
    format: FxPFormat
    iterations: int = Field(ge=1, le=40)
    guard_bits: int = Field(default_factory=lambda: settings.GUARD_BITS, ge=0, le=8)

    @property
    def ext_frac(self) -> int:
        return self.format.frac_bits + self.guard_bits

    @classmethod
    def for_mac(cls, fmt: FxPFormat, accuracy: Accuracy, iterations: Optional[int] = None) -> "CordicConfig":
        return cls(mode=LINEAR_ROTATION, accuracy=accuracy, format=fmt,
                   iterations=mac_cycles(fmt, accuracy, iterations))

    @classmethod
    def for_divide(cls, fmt: FxPFormat, accuracy: Accuracy, iterations: Optional[int] = None) -> "CordicConfig":
        return cls(mode=LINEAR_VECTORING, accuracy=accuracy, format=fmt,
                   iterations=activation_iterations(fmt, accuracy, iterations))

    @classmethod
    def for_activation(cls, fmt: FxPFormat, accuracy: Accuracy, iterations: Optional[int] = None) -> "CordicConfig":
        return cls(mode=HYPERBOLIC_ROTATION, accuracy=accuracy, format=fmt,
                   iterations=activation_iterations(fmt, accuracy, iterations))


class CordicResult(BaseModel):
    """Outputs of one kernel call.

    ``y_ext`` and ``z_ext`` hold the registers before the final rounding,
    with ``frac_bits + guard_bits`` fractional bits.
    """

    model_config = ConfigDict(frozen=True)

    x: FxPValue
    y: FxPValue
    z: FxPValue
    cycles: int
    y_ext: int
    z_ext: int
    ext_frac: int
