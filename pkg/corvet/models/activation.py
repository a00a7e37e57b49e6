from enum import Enum
from typing import List
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .cordic import CordicConfig
from .fxp import FxPValue


class ActivationKind(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SOFTMAX = "softmax"
    GELU = "gelu"
    SWISH = "swish"
    SELU = "selu"
    NONE = "none"


class Datapath(str, Enum):
    BYPASS = "bypass"
    HR = "hr"
    HR_MULTIPLIERS = "hr+multipliers"
    HR_LV_FIFO = "hr+lv+fifo"


DATAPATH = {
    ActivationKind.RELU: Datapath.BYPASS,
    ActivationKind.NONE: Datapath.BYPASS,
    ActivationKind.SIGMOID: Datapath.HR,
    ActivationKind.TANH: Datapath.HR,
    ActivationKind.SELU: Datapath.HR,
    ActivationKind.GELU: Datapath.HR_MULTIPLIERS,
    ActivationKind.SWISH: Datapath.HR_MULTIPLIERS,
    ActivationKind.SOFTMAX: Datapath.HR_LV_FIFO,
}


class AfRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    values: List[FxPValue] = Field(min_length=1)
    kind: ActivationKind
    cfg: CordicConfig

    @model_validator(mode="after")
    def check_formats(self):
        formats = {v.format for v in self.values}
        if len(formats) != 1:
            raise ValueError("all values of a request must share one format")
        if self.values[0].format != self.cfg.format:
            raise ValueError("values do not match the config format")
        return self


class AfReport(BaseModel):
    """Occupancy of the shared activation block."""

    cycles_total: int = 0
    hr_busy_cycles: int = 0
    lv_busy_cycles: int = 0
    multiplier_cycles: int = 0
    fifo_peak_depth: int = 0

    @model_validator(mode="after")
    def check_busy(self):
        if self.hr_busy_cycles + self.lv_busy_cycles > self.cycles_total:
            raise ValueError("busy cycles exceed total cycles")
        return self

    @property
    def utilization_hr(self) -> float:
        return self.hr_busy_cycles / self.cycles_total if self.cycles_total else 0.0

    @property
    def utilization_lv(self) -> float:
        return self.lv_busy_cycles / self.cycles_total if self.cycles_total else 0.0

    def __add__(self, other: "AfReport") -> "AfReport":
        return AfReport(
            cycles_total=self.cycles_total + other.cycles_total,
            hr_busy_cycles=self.hr_busy_cycles + other.hr_busy_cycles,
            lv_busy_cycles=self.lv_busy_cycles + other.lv_busy_cycles,
            multiplier_cycles=self.multiplier_cycles + other.multiplier_cycles,
            fifo_peak_depth=max(self.fifo_peak_depth, other.fifo_peak_depth),
        )
