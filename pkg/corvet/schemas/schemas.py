from pydantic import BaseModel, ConfigDict, Field
from typing import Optional, List

# File formats

class EngineConfigFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pes: int = 64
    bank_depth: int = 32
    default_format: str = "fxp8"
    default_accuracy: str = "accurate"
    overlap_af: bool = True

class ModelLayer(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: str
    out: Optional[int] = None
    activation: str = "none"
    format: Optional[str] = None
    accuracy: Optional[str] = None
    iterations: Optional[int] = None
    af_iterations: Optional[int] = None
    # conv
    kernel: Optional[List[int]] = None
    # pool
    pool: Optional[str] = None
    window: Optional[List[int]] = None
    variant: Optional[str] = None
    normalize: bool = False
    stride: int = 1

class ModelFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    input_dim: int = Field(ge=1)
    input_shape: Optional[List[int]] = None
    layers: List[ModelLayer] = Field(min_length=1)
    weights_file: str

class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    input_dim: int = Field(ge=1)
    num_classes: int = Field(ge=1)
    count: int = Field(ge=1)
    samples_file: str
    labels_file: str

class ModesFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    assignment: List[str]

# Reports

class LayerCycles(BaseModel):
    layer: int
    kind: str
    format: str
    accuracy: str
    lanes: int
    batches: int
    cycles_per_mac: int
    mac_cycles: int
    bias_cycles: int
    af_cycles: int
    af_block_cycles: int
    pool_cycles: int
    control_overhead_cycles: int
    segment_stall_cycles: int
    total_cycles: int
    macs: int
    lane_occupancy: float
    hr_busy_cycles: int
    lv_busy_cycles: int
    fifo_peak_depth: int

class CycleReport(BaseModel):
    """Cycle totals of one inference; ``af_cycles`` counts only the AF time left exposed."""

    per_layer: List[LayerCycles]
    per_layer_cycles: List[int]
    mac_cycles: int
    bias_cycles: int
    af_cycles: int
    af_block_cycles: int
    pool_cycles: int
    control_overhead_cycles: int
    segment_stall_cycles: int
    total_cycles: int
    total_macs: int
    lane_occupancy: float
    effective_macs_per_cycle: float
    mac_throughput: float
    af_hr_utilization: float
    af_lv_utilization: float
    pe_busy_cycles: List[int]

class SensitivityEntry(BaseModel):
    layer: int
    accuracy: Optional[float] = None
    drop: Optional[float] = None

class SensitivityReport(BaseModel):
    baseline_accuracy: float
    threshold: float
    per_layer: List[SensitivityEntry]
    assignment: List[str]

class SamplePrediction(BaseModel):
    index: int
    label: int
    float_prediction: int
    fxp_prediction: int

class EvalResult(BaseModel):
    model: str
    dataset: str
    samples: int
    float_accuracy: float
    fxp_accuracy: float
    float_stderr: float
    fxp_stderr: float
    accuracy_delta: float
    top1_agreement: float
    assignment: List[str]
    formats: List[str]
    num_pes: int
    cycles: CycleReport
    predictions: List[SamplePrediction]
    sensitivity: Optional[SensitivityReport] = None

class SweepRow(BaseModel):
    axis: str
    point: str
    accuracy: float
    total_cycles: int
    effective_macs_per_cycle: float
    tanh_max_error: Optional[float] = None

class RunManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: str
    dataset: str
    engine: Optional[str] = None
    modes: Optional[str] = None
    out: str
    seed: int = 0
    samples: Optional[int] = Field(default=None, ge=1)
    trace: bool = False
