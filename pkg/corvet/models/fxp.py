import re
from pydantic import BaseModel, ConfigDict, model_validator

from ..core.exceptions import ConfigurationError

# fxp32 is an internal reference width used for oracle runs; it has no
# cycle-table entry and keeps products inside int64.
SUPPORTED_WIDTHS = (4, 8, 16, 32)
FXP32_MAX_FRAC = 23
_FORMAT_RE = re.compile(r"^fxp(\d+)(?:\.f(\d+))?$")


class FxPFormat(BaseModel):
    """Signed two's-complement fixed-point format."""

    model_config = ConfigDict(frozen=True)

    total_bits: int
    frac_bits: int
    signed: bool = True

    @model_validator(mode="after")
    def check_widths(self):
        if self.total_bits not in SUPPORTED_WIDTHS:
            raise ValueError(f"total_bits must be one of {SUPPORTED_WIDTHS}, got {self.total_bits}")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(f"frac_bits must be in [0, {self.total_bits}), got {self.frac_bits}")
        if self.total_bits == 32 and self.frac_bits > FXP32_MAX_FRAC:
            raise ValueError(f"fxp32 supports at most {FXP32_MAX_FRAC} fractional bits")
        if not self.signed:
            raise ValueError("only signed formats are supported")
        return self

    @classmethod
    def default(cls, total_bits: int) -> "FxPFormat":
        # Two integer bits of headroom: values live in [-2, 2)
        if total_bits == 32:
            return cls(total_bits=32, frac_bits=20)
        return cls(total_bits=total_bits, frac_bits=total_bits - 2)

    @classmethod
    def parse(cls, name: str) -> "FxPFormat":
        """Parse "fxp8" or "fxp8.f6" style names."""
        match = _FORMAT_RE.match(name.strip().lower())
        if not match:
            raise ConfigurationError(f"unknown format '{name}'; expected fxp4/fxp8/fxp16 with optional .fN")
        total = int(match.group(1))
        try:
            if match.group(2) is None:
                return cls.default(total)
            return cls(total_bits=total, frac_bits=int(match.group(2)))
        except ValueError as e:
            raise ConfigurationError(f"invalid format '{name}': {e}") from e

    @property
    def name(self) -> str:
        return f"fxp{self.total_bits}.f{self.frac_bits}"

    @property
    def int_bits(self) -> int:
        return self.total_bits - self.frac_bits

    @property
    def min_raw(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def min_value(self) -> float:
        return self.min_raw * self.resolution

    @property
    def max_value(self) -> float:
        return self.max_raw * self.resolution

    def __str__(self) -> str:
        return self.name


class FxPValue(BaseModel):
    """One datapath word: raw payload plus its format."""

    model_config = ConfigDict(frozen=True)

    raw: int
    format: FxPFormat

    @model_validator(mode="after")
    def check_raw(self):
        if not self.format.min_raw <= self.raw <= self.format.max_raw:
            raise ValueError(f"raw {self.raw} does not fit {self.format.name}")
        return self

    @property
    def value(self) -> float:
        return self.raw * self.format.resolution

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"FxPValue({self.raw} @ {self.format.name} = {self.value:g})"
