import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
import numpy as np
from pydantic import ValidationError

from ..core.config import settings
from ..core.exceptions import ConfigurationError, LoadError
from ..core.logging import app_logger
from ..core.storage import atomic_write
from ..models.activation import ActivationKind, DATAPATH, Datapath
from ..models.cordic import Accuracy, MAC_CYCLE_TABLE
from ..models.engine import ConvGeometry, EngineConfig, LayerDescriptor, LayerKind, LayerParams, TraceEvent
from ..models.fxp import FxPFormat
from ..models.network import Dataset, LayerSpec, ModelSpec, QuantizedModel
from ..models.pooling import PoolVariant, PoolWindow
from ..schemas.schemas import (
    DatasetManifest,
    EngineConfigFile,
    EvalResult,
    ModelFile,
    ModelLayer,
    ModesFile,
    SamplePrediction,
    SensitivityEntry,
    SensitivityReport,
)
from .activation_service import ActivationService
from .engine_service import EngineService
from .fxp_service import FxPService
from .memmap_service import MemmapService
from .pooling_service import PoolingService

WEIGHTS_MAGIC = b"CVTW"
WEIGHTS_VERSION = 1
_BLOB_HEADER = np.dtype([("magic", "S4"), ("version", "<u2"), ("count", "<u2")])

# Samples per engine call; chunks are the unit of parallel evaluation
EVAL_CHUNK = 256

_KINDS = {
    "dense": LayerKind.DENSE,
    "conv": LayerKind.CONV,
    "pool": LayerKind.POOL,
    "activation": LayerKind.ACTIVATION,
    "activation-only": LayerKind.ACTIVATION,
}


@dataclass
class Evaluation:
    result: EvalResult
    trace: List[TraceEvent] = field(default_factory=list)


def _field_path(source: str, e: ValidationError) -> str:
    loc = e.errors()[0]["loc"]
    return f"{source}:" + ".".join(str(p) for p in loc)


def _read_json(path: Path):
    if not path.exists():
        raise LoadError("file not found", path=str(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise LoadError(f"malformed JSON: {str(e)}", path=str(path)) from e


class RunnerService:
    """Model ingestion, float reference, quantization and accuracy evaluation."""

    # Weights blob

    @staticmethod
    def encode_weights(tensors: Sequence[np.ndarray]) -> bytes:
        header = np.zeros(1, dtype=_BLOB_HEADER)
        header["magic"] = WEIGHTS_MAGIC
        header["version"] = WEIGHTS_VERSION
        header["count"] = len(tensors)
        parts = [header.tobytes()]
        for t in tensors:
            t = np.ascontiguousarray(t, dtype="<f8")
            parts.append(np.array([t.ndim], dtype="u1").tobytes())
            parts.append(np.array(t.shape, dtype="<u4").tobytes())
            parts.append(t.tobytes())
        return b"".join(parts)

    @staticmethod
    def decode_weights(data: bytes, source: str = "weights") -> List[np.ndarray]:
        if len(data) < _BLOB_HEADER.itemsize:
            raise LoadError("truncated weights header", path=source)
        header = np.frombuffer(data[:_BLOB_HEADER.itemsize], dtype=_BLOB_HEADER)[0]
        if bytes(header["magic"]) != WEIGHTS_MAGIC:
            raise LoadError(f"bad magic {bytes(header['magic'])!r}", path=source)
        if int(header["version"]) != WEIGHTS_VERSION:
            raise LoadError(f"unsupported weights version {int(header['version'])}", path=source)

        tensors = []
        pos = _BLOB_HEADER.itemsize
        try:
            for i in range(int(header["count"])):
                rank = int(np.frombuffer(data, dtype="u1", count=1, offset=pos)[0])
                pos += 1
                shape = tuple(int(d) for d in np.frombuffer(data, dtype="<u4", count=rank, offset=pos))
                pos += 4 * rank
                size = int(np.prod(shape)) if shape else 1
                tensors.append(np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy())
                pos += 8 * size
        except ValueError as e:
            raise LoadError(f"tensor {len(tensors)} truncated: {str(e)}", path=source) from e
        if pos != len(data):
            raise LoadError(f"{len(data) - pos} trailing bytes after {len(tensors)} tensors", path=source)
        return tensors

    # Model files

    @staticmethod
    def _next_tensor(tensors, where: str, what: str, shape: Tuple[int, ...]) -> np.ndarray:
        try:
            t = next(tensors)
        except StopIteration:
            raise LoadError(f"weights file ends before the {what} tensor", path=where)
        # Conv kernels may also be stored as (out, C, kh, kw)
        if t.ndim == 4 and what == "weight" and t.shape[0] == shape[0] and t.size == int(np.prod(shape)):
            t = t.reshape(shape)
        if t.shape != shape:
            raise LoadError(f"{what} shape {t.shape} does not match expected {shape}", path=where)
        if not np.all(np.isfinite(t)):
            raise LoadError(f"{what} tensor holds non-finite values", path=where)
        return t

    @staticmethod
    def parse_model(doc: ModelFile, tensors: List[np.ndarray], source: str = "model") -> ModelSpec:
        shape = tuple(doc.input_shape) if doc.input_shape else None
        if shape is not None and (len(shape) != 3 or int(np.prod(shape)) != doc.input_dim):
            raise LoadError(f"input_shape {list(shape)} does not hold {doc.input_dim} values",
                            path=f"{source}:input_shape")
        size = doc.input_dim
        remaining = iter(tensors)
        layers = []

        for i, ml in enumerate(doc.layers):
            where = f"{source}:layers.{i}"
            if ml.kind not in _KINDS:
                raise LoadError(f"unknown layer kind '{ml.kind}'", path=f"{where}.kind")
            kind = _KINDS[ml.kind]
            try:
                activation = ActivationKind(ml.activation)
            except ValueError:
                raise LoadError(f"unknown activation '{ml.activation}'", path=f"{where}.activation")
            try:
                fmt = FxPFormat.parse(ml.format) if ml.format else None
            except ConfigurationError as e:
                raise LoadError(str(e), path=f"{where}.format") from e
            try:
                accuracy = Accuracy(ml.accuracy) if ml.accuracy else None
            except ValueError:
                raise LoadError(f"unknown accuracy '{ml.accuracy}'", path=f"{where}.accuracy")

            common = dict(activation=activation, format=fmt, accuracy=accuracy,
                          iterations=ml.iterations, af_iterations=ml.af_iterations)
            if kind == LayerKind.DENSE:
                if ml.out is None or ml.out < 0:
                    raise LoadError("dense layers need a non-negative 'out'", path=f"{where}.out")
                w = RunnerService._next_tensor(remaining, where, "weight", (ml.out, size))
                b = RunnerService._next_tensor(remaining, where, "bias", (ml.out,))
                layers.append(LayerSpec(kind=kind, n_out=ml.out, n_in=size, weights=w, bias=b, **common))
                size, shape = ml.out, None

            elif kind == LayerKind.CONV:
                if shape is None:
                    raise LoadError("conv layers need a (C, H, W) input", path=where)
                if ml.out is None or ml.out < 1 or not ml.kernel or len(ml.kernel) != 2:
                    raise LoadError("conv layers need 'out' and a two-element 'kernel'", path=where)
                try:
                    geom = ConvGeometry(in_channels=shape[0], height=shape[1], width=shape[2],
                                        kernel_h=ml.kernel[0], kernel_w=ml.kernel[1], stride=ml.stride)
                except ValidationError as e:
                    raise LoadError(e.errors()[0]["msg"], path=f"{where}.kernel") from e
                w = RunnerService._next_tensor(remaining, where, "weight", (ml.out, geom.patch_size))
                b = RunnerService._next_tensor(remaining, where, "bias", (ml.out,))
                out_shape = (ml.out, geom.out_h, geom.out_w)
                layers.append(LayerSpec(kind=kind, n_out=ml.out, n_in=geom.patch_size, conv=geom, in_shape=shape,
                                        out_shape=out_shape, weights=w, bias=b, **common))
                shape = out_shape
                size = int(np.prod(shape))

            elif kind == LayerKind.POOL:
                if shape is None:
                    raise LoadError("pool layers need a (C, H, W) input", path=where)
                if (ml.pool or "aad") != "aad":
                    raise LoadError(f"unsupported pooling '{ml.pool}'", path=f"{where}.pool")
                if not ml.window or len(ml.window) != 2:
                    raise LoadError("pool layers need a two-element 'window'", path=f"{where}.window")
                try:
                    win = PoolWindow(window_h=ml.window[0], window_w=ml.window[1], stride=ml.stride,
                                     variant=PoolVariant(ml.variant or PoolVariant.SLIDING.value))
                except (ValidationError, ValueError) as e:
                    raise LoadError(str(e).splitlines()[0], path=f"{where}.window") from e
                oh, ow = win.output_shape(shape[1], shape[2])
                if oh < 1 or ow < 1:
                    raise LoadError(f"window does not fit a {shape[1]}x{shape[2]} map", path=f"{where}.window")
                out_shape = (shape[0], oh, ow)
                n_out = int(np.prod(out_shape))
                layers.append(LayerSpec(kind=kind, n_out=n_out, n_in=size, pool=win, normalize=ml.normalize,
                                        in_shape=shape, out_shape=out_shape, **common))
                shape, size = out_shape, n_out

            else:
                layers.append(LayerSpec(kind=kind, n_out=size, n_in=size, in_shape=shape, out_shape=shape, **common))

        extra = sum(1 for _ in remaining)
        if extra:
            raise LoadError(f"{extra} unused tensors in the weights file", path=f"{source}:weights_file")
        if not any(layer.has_macs for layer in layers):
            raise LoadError("model has no dense or conv layer", path=f"{source}:layers")
        input_shape = tuple(doc.input_shape) if doc.input_shape else None
        return ModelSpec(name=doc.name, input_dim=doc.input_dim, layers=layers, input_shape=input_shape)

    @staticmethod
    def ingest(path) -> ModelSpec:
        path = Path(path)
        raw = _read_json(path)
        try:
            doc = ModelFile.model_validate(raw)
        except ValidationError as e:
            raise LoadError(e.errors()[0]["msg"], path=_field_path(str(path), e)) from e

        weights_path = path.parent / doc.weights_file
        if not weights_path.exists():
            raise LoadError("weights file not found", path=str(weights_path))
        tensors = RunnerService.decode_weights(weights_path.read_bytes(), source=str(weights_path))
        model = RunnerService.parse_model(doc, tensors, source=str(path))
        app_logger.info(f"Loaded model {model.name} with {len(model.layers)} layers from {path}")
        return model

    @staticmethod
    def save_model(model: ModelSpec, path) -> Path:
        path = Path(path)
        weights_name = f"{path.stem}.weights.bin"
        layers = []
        tensors = []
        for layer in model.layers:
            ml = ModelLayer(
                kind=layer.kind.value,
                activation=layer.activation.value,
                format=layer.format.name if layer.format else None,
                accuracy=layer.accuracy.value if layer.accuracy else None,
                iterations=layer.iterations,
                af_iterations=layer.af_iterations,
            )
            if layer.has_macs:
                ml.out = layer.n_out
                tensors.extend([layer.weights, layer.bias])
            if layer.kind == LayerKind.CONV:
                ml.kernel = [layer.conv.kernel_h, layer.conv.kernel_w]
                ml.stride = layer.conv.stride
            if layer.kind == LayerKind.POOL:
                ml.pool = "aad"
                ml.window = [layer.pool.window_h, layer.pool.window_w]
                ml.variant = layer.pool.variant.value
                ml.stride = layer.pool.stride
                ml.normalize = layer.normalize
            layers.append(ml)

        doc = ModelFile(
            name=model.name,
            input_dim=model.input_dim,
            input_shape=list(model.input_shape) if model.input_shape else None,
            layers=layers,
            weights_file=weights_name,
        )
        atomic_write(path.parent / weights_name, RunnerService.encode_weights(tensors))
        atomic_write(path, doc.model_dump_json(indent=2, exclude_none=True))
        app_logger.info(f"Wrote model {model.name} to {path}")
        return path

    # Datasets

    @staticmethod
    def read_dataset(path) -> Dataset:
        path = Path(path)
        try:
            manifest = DatasetManifest.model_validate(_read_json(path))
        except ValidationError as e:
            raise LoadError(e.errors()[0]["msg"], path=_field_path(str(path), e)) from e

        samples_path = path.parent / manifest.samples_file
        labels_path = path.parent / manifest.labels_file
        for p in (samples_path, labels_path):
            if not p.exists():
                raise LoadError("file not found", path=str(p))
        samples = np.frombuffer(samples_path.read_bytes(), dtype="<f8")
        labels = np.frombuffer(labels_path.read_bytes(), dtype="u1").astype(np.int64)
        if samples.size != manifest.count * manifest.input_dim:
            raise LoadError(f"holds {samples.size} values, manifest announces "
                            f"{manifest.count}x{manifest.input_dim}", path=str(samples_path))
        if labels.size != manifest.count:
            raise LoadError(f"holds {labels.size} labels, manifest announces {manifest.count}", path=str(labels_path))
        if labels.max() >= manifest.num_classes:
            raise LoadError(f"label {labels.max()} outside {manifest.num_classes} classes", path=str(labels_path))
        return Dataset(manifest.name, samples.reshape(manifest.count, manifest.input_dim).copy(), labels,
                       manifest.num_classes)

    @staticmethod
    def write_dataset(dataset: Dataset, path) -> Path:
        path = Path(path)
        stem = path.stem
        manifest = DatasetManifest(
            name=dataset.name,
            input_dim=dataset.samples.shape[1],
            num_classes=dataset.num_classes,
            count=len(dataset),
            samples_file=f"{stem}.samples.f64",
            labels_file=f"{stem}.labels.u8",
        )
        atomic_write(path.parent / manifest.samples_file, np.ascontiguousarray(dataset.samples, dtype="<f8").tobytes())
        atomic_write(path.parent / manifest.labels_file, dataset.labels.astype("u1").tobytes())
        atomic_write(path, manifest.model_dump_json(indent=2))
        app_logger.info(f"Wrote dataset {dataset.name} ({len(dataset)} samples) to {path}")
        return path

    # Engine configuration

    @staticmethod
    def read_engine_config(path=None) -> EngineConfig:
        if path is None:
            return EngineConfig()
        path = Path(path)
        try:
            doc = EngineConfigFile.model_validate(_read_json(path))
        except ValidationError as e:
            raise LoadError(e.errors()[0]["msg"], path=_field_path(str(path), e)) from e
        return RunnerService.engine_config(doc)

    @staticmethod
    def engine_config(doc: EngineConfigFile) -> EngineConfig:
        try:
            return EngineConfig(
                num_pes=doc.pes,
                bank_depth=doc.bank_depth,
                default_format=FxPFormat.parse(doc.default_format),
                default_accuracy=Accuracy(doc.default_accuracy),
                overlap_af=doc.overlap_af,
            )
        except ValidationError as e:
            raise ConfigurationError(f"engine config: {e.errors()[0]['msg']}") from e
        except ValueError as e:
            raise ConfigurationError(f"engine config: {str(e)}") from e

    # Float reference

    @staticmethod
    def run_float(model: ModelSpec, inputs) -> np.ndarray:
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        batch = x.shape[0]
        for layer in model.layers:
            if layer.kind == LayerKind.DENSE:
                x = x @ layer.weights.T + layer.bias
            elif layer.kind == LayerKind.CONV:
                patches = EngineService.im2col(x, layer.conv)
                y = patches @ layer.weights.T + layer.bias
                x = y.reshape(batch, layer.conv.positions, layer.n_out).transpose(0, 2, 1).reshape(batch, -1)
            elif layer.kind == LayerKind.POOL:
                y = PoolingService.pool_float(x.reshape((batch,) + tuple(layer.in_shape)), layer.pool)
                if layer.normalize:
                    y = PoolingService.normalize_float(y, axes=(1, 2, 3))
                x = y.reshape(batch, -1)
            if x.shape[-1] > 0:
                x = ActivationService.reference(layer.activation, x)
        return x

    # Quantization

    @staticmethod
    def layer_formats(model: ModelSpec, cfg: EngineConfig, override: Optional[FxPFormat] = None) -> List[FxPFormat]:
        if override is not None:
            return [override] * len(model.layers)
        return [layer.format or cfg.default_format for layer in model.layers]

    @staticmethod
    def quantize_tensor(w, fmt: FxPFormat) -> Tuple[np.ndarray, int]:
        """Raws of w / 2**s where 2**s is the smallest power of two covering max|w|."""
        w = np.asarray(w, dtype=np.float64)
        peak = float(np.max(np.abs(w))) if w.size else 0.0
        shift = int(np.ceil(np.log2(peak))) if peak > 0 else 0
        return FxPService.quantize_raw(w / 2.0 ** shift, fmt), shift

    @staticmethod
    def quantize_model(model: ModelSpec, formats: Sequence[FxPFormat]) -> QuantizedModel:
        if len(formats) != len(model.layers):
            raise ConfigurationError(f"{len(formats)} formats for {len(model.layers)} layers")
        params = []
        raws = []
        compute_formats = []
        for layer, fmt in zip(model.layers, formats):
            if not layer.has_macs:
                continue
            w, ws = RunnerService.quantize_tensor(layer.weights, fmt)
            b, bs = RunnerService.quantize_tensor(layer.bias, fmt)
            params.append(LayerParams(weights=w, bias=b, weight_shift=ws, bias_shift=bs))
            raws.append((w, b))
            compute_formats.append(fmt)

        topology = model.topology
        spec = MemmapService.addr_width(topology)
        stream = MemmapService.build_stream(topology, spec, raws)
        app_logger.info(f"Quantized {model.name}: {len(stream)} parameters, {spec.total_bits}-bit addresses")
        return QuantizedModel(name=model.name, formats=compute_formats, params=params, topology=topology,
                              addr_spec=spec, stream=stream)

    @staticmethod
    def load_params(qm: QuantizedModel) -> List[LayerParams]:
        """Push the write stream through the LIFO loader and read it back in engine order."""
        mem = MemmapService.lifo_load(qm.stream, qm.topology, qm.addr_spec)
        return [
            LayerParams(weights=w, bias=b, weight_shift=p.weight_shift, bias_shift=p.bias_shift)
            for (w, b), p in zip(MemmapService.layer_params(mem), qm.params)
        ]

    @staticmethod
    def build_layers(
        model: ModelSpec, formats: Sequence[FxPFormat], assignment: Sequence[Accuracy]
    ) -> List[LayerDescriptor]:
        if len(assignment) != len(model.layers):
            raise ConfigurationError(f"mode assignment has {len(assignment)} entries for {len(model.layers)} layers")
        layers = []
        for i, (layer, fmt, acc) in enumerate(zip(model.layers, formats, assignment)):
            try:
                layers.append(LayerDescriptor(
                    kind=layer.kind, n_out=layer.n_out, n_in=layer.n_in, format=fmt, accuracy=acc,
                    activation=layer.activation, pool=layer.pool, normalize=layer.normalize,
                    iterations=layer.iterations, af_iterations=layer.af_iterations,
                    conv=layer.conv, in_shape=layer.in_shape,
                ))
            except ValidationError as e:
                raise ConfigurationError(f"layer {i}: {e.errors()[0]['msg']}") from e
        return layers

    # Mode assignment

    @staticmethod
    def has_approximate_mode(layer: LayerDescriptor) -> bool:
        """Whether switching the layer to approximate changes any iteration count."""
        if (layer.format.total_bits, Accuracy.APPROXIMATE) not in MAC_CYCLE_TABLE:
            return False
        if layer.has_macs and layer.iterations is None:
            return True
        return DATAPATH[layer.activation] != Datapath.BYPASS and layer.af_iterations is None

    @staticmethod
    def uniform_assignment(layers: Sequence[LayerDescriptor], accuracy: Accuracy) -> List[Accuracy]:
        if accuracy == Accuracy.ACCURATE:
            return [Accuracy.ACCURATE] * len(layers)
        return [Accuracy.APPROXIMATE if RunnerService.has_approximate_mode(l) else Accuracy.ACCURATE for l in layers]

    @staticmethod
    def read_modes(path, num_layers: int) -> List[Accuracy]:
        path = Path(path)
        try:
            doc = ModesFile.model_validate(_read_json(path))
        except ValidationError as e:
            raise LoadError(e.errors()[0]["msg"], path=_field_path(str(path), e)) from e
        if len(doc.assignment) != num_layers:
            raise LoadError(f"{len(doc.assignment)} modes for {num_layers} layers", path=f"{path}:assignment")
        try:
            return [Accuracy(m) for m in doc.assignment]
        except ValueError as e:
            raise LoadError(str(e), path=f"{path}:assignment") from e

    @staticmethod
    def resolve_assignment(
        model: ModelSpec,
        formats: Sequence[FxPFormat],
        modes: Optional[str],
        cfg: EngineConfig,
        dataset: Optional[Dataset] = None,
    ) -> Tuple[List[Accuracy], Optional[SensitivityReport]]:
        """Per-layer modes from a --modes value; without one, the model file's modes apply."""
        if modes is None:
            return [layer.accuracy or cfg.default_accuracy for layer in model.layers], None
        base = RunnerService.build_layers(model, formats, [Accuracy.ACCURATE] * len(model.layers))
        if modes == "uniform-acc":
            return RunnerService.uniform_assignment(base, Accuracy.ACCURATE), None
        if modes == "uniform-approx":
            return RunnerService.uniform_assignment(base, Accuracy.APPROXIMATE), None
        if modes == "heuristic":
            if dataset is None:
                raise ConfigurationError("the heuristic needs a dataset")
            report = RunnerService.sensitivity_scan(model, dataset, cfg, formats=formats)
            return [Accuracy(a) for a in report.assignment], report
        if modes.startswith("file="):
            return RunnerService.read_modes(modes[len("file="):], len(model.layers)), None
        raise ConfigurationError(f"unknown modes '{modes}'; expected uniform-approx, uniform-acc, heuristic or file=PATH")

    # Evaluation

    @staticmethod
    def run_fxp(layers: Sequence[LayerDescriptor], params: Sequence[LayerParams], samples, cfg: EngineConfig):
        """Quantize samples and run them through the engine in chunks. Returns (outputs, NetworkRun of chunk 0)."""
        x = FxPService.quantize_raw(np.atleast_2d(samples), layers[0].format)
        chunks = [x[i:i + EVAL_CHUNK] for i in range(0, len(x), EVAL_CHUNK)]

        def run(chunk):
            return EngineService.run_network(layers, chunk, params, cfg)

        # Executor.map keeps chunk order, so results do not depend on scheduling
        with ThreadPoolExecutor(max_workers=max(1, settings.THREADS)) as pool:
            runs = list(pool.map(run, chunks))
        return np.concatenate([r.outputs for r in runs]), runs[0]

    @staticmethod
    def _accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
        return float(100.0 * np.mean(pred == labels))

    @staticmethod
    def _stderr(acc: float, n: int) -> float:
        p = acc / 100.0
        return float(100.0 * np.sqrt(p * (1.0 - p) / n))

    @staticmethod
    def sensitivity_scan(
        model: ModelSpec,
        dataset: Dataset,
        cfg: EngineConfig,
        threshold: Optional[float] = None,
        formats: Optional[Sequence[FxPFormat]] = None,
    ) -> SensitivityReport:
        """Approximate one layer at a time against the all-accurate baseline.

        Layers whose drop exceeds ``threshold`` (percentage points) stay accurate.
        Drops are floored at zero before the comparison, so a negative threshold
        keeps every layer accurate even when approximation helps on the scan set.
        """
        threshold = settings.SENSITIVITY_THRESHOLD if threshold is None else threshold
        formats = formats or RunnerService.layer_formats(model, cfg)
        params = RunnerService.load_params(RunnerService.quantize_model(model, formats))
        n = len(model.layers)

        def accuracy(assignment) -> float:
            layers = RunnerService.build_layers(model, formats, assignment)
            out, _ = RunnerService.run_fxp(layers, params, dataset.samples, cfg)
            return RunnerService._accuracy(np.argmax(out, axis=-1), dataset.labels)

        accurate = [Accuracy.ACCURATE] * n
        baseline = accuracy(accurate)
        candidates = RunnerService.build_layers(model, formats, accurate)
        entries = []
        assignment = []
        for i, layer in enumerate(candidates):
            if not RunnerService.has_approximate_mode(layer):
                entries.append(SensitivityEntry(layer=i))
                assignment.append(Accuracy.ACCURATE.value)
                continue
            trial = list(accurate)
            trial[i] = Accuracy.APPROXIMATE
            acc = accuracy(trial)
            drop = baseline - acc
            entries.append(SensitivityEntry(layer=i, accuracy=acc, drop=drop))
            assignment.append((Accuracy.ACCURATE if max(drop, 0.0) > threshold else Accuracy.APPROXIMATE).value)
            app_logger.info(f"Layer {i} approximate: accuracy {acc:.2f} (drop {drop:.2f})")

        return SensitivityReport(baseline_accuracy=baseline, threshold=threshold, per_layer=entries,
                                 assignment=assignment)

    @staticmethod
    def evaluate(
        model: ModelSpec,
        dataset: Dataset,
        cfg: EngineConfig,
        assignment: Sequence[Accuracy],
        formats: Optional[Sequence[FxPFormat]] = None,
        sensitivity: Optional[SensitivityReport] = None,
    ) -> Evaluation:
        formats = formats or RunnerService.layer_formats(model, cfg)
        if dataset.samples.shape[1] != model.input_dim:
            raise ConfigurationError(f"dataset has {dataset.samples.shape[1]} inputs, model expects {model.input_dim}")

        params = RunnerService.load_params(RunnerService.quantize_model(model, formats))
        layers = RunnerService.build_layers(model, formats, assignment)
        out, first = RunnerService.run_fxp(layers, params, dataset.samples, cfg)

        fxp_pred = np.argmax(out, axis=-1)
        float_pred = np.argmax(RunnerService.run_float(model, dataset.samples), axis=-1)
        labels = dataset.labels
        n = len(dataset)
        float_acc = RunnerService._accuracy(float_pred, labels)
        fxp_acc = RunnerService._accuracy(fxp_pred, labels)

        result = EvalResult(
            model=model.name,
            dataset=dataset.name,
            samples=n,
            float_accuracy=float_acc,
            fxp_accuracy=fxp_acc,
            float_stderr=RunnerService._stderr(float_acc, n),
            fxp_stderr=RunnerService._stderr(fxp_acc, n),
            accuracy_delta=fxp_acc - float_acc,
            top1_agreement=RunnerService._accuracy(fxp_pred, float_pred),
            assignment=[Accuracy(a).value for a in assignment],
            formats=[f.name for f in formats],
            num_pes=cfg.num_pes,
            cycles=first.report,
            predictions=[
                SamplePrediction(index=i, label=int(labels[i]), float_prediction=int(float_pred[i]),
                                 fxp_prediction=int(fxp_pred[i]))
                for i in range(n)
            ],
            sensitivity=sensitivity,
        )
        app_logger.info(
            f"Evaluated {model.name} on {n} samples: float {float_acc:.2f}%, fxp {fxp_acc:.2f}%, "
            f"{first.report.total_cycles} cycles"
        )
        return Evaluation(result=result, trace=first.trace)
