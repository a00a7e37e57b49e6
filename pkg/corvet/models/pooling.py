from dataclasses import dataclass
from enum import Enum
from pydantic import BaseModel, ConfigDict, Field
import numpy as np

from .fxp import FxPFormat


class PoolVariant(str, Enum):
    # Register accumulation over a moving window
    SLIDING = "sliding"
    # All pairwise deviations of a window at once
    PARALLEL = "parallel"


class PoolWindow(BaseModel):
    model_config = ConfigDict(frozen=True)

    window_h: int = Field(ge=1)
    window_w: int = Field(ge=1)
    stride: int = Field(default=1, ge=1)
    variant: PoolVariant = PoolVariant.SLIDING

    @property
    def size(self) -> int:
        return self.window_h * self.window_w

    def output_shape(self, height: int, width: int):
        return (height - self.window_h) // self.stride + 1, (width - self.window_w) // self.stride + 1


@dataclass(frozen=True)
class FeatureMap:
    """channels x height x width raws sharing one format."""

    data: np.ndarray
    format: FxPFormat

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=np.int64))
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError(f"feature map must be a non-empty 3-D tensor, got shape {self.data.shape}")

    @property
    def shape(self):
        return self.data.shape

    def values(self) -> np.ndarray:
        return self.data.astype(np.float64) * self.format.resolution
