from dataclasses import replace
from pathlib import Path
from typing import List
import numpy as np
from pydantic import ValidationError

from ..core.exceptions import ConfigurationError
from ..core.logging import app_logger
from ..models.activation import ActivationKind, DATAPATH, Datapath
from ..models.cordic import Accuracy, CordicConfig
from ..models.engine import EngineConfig
from ..models.fxp import FxPFormat
from ..models.network import ModelSpec
from ..schemas.schemas import SweepRow
from ..services.activation_service import ActivationService
from ..services.csv_service import CSVService
from ..services.fxp_service import FxPService
from ..services.report_service import ReportService
from ..services.runner_service import RunnerService
from .common import add_io_arguments, manifest_from_args, subsample, write_metadata

DEFAULT_POINTS = {
    "iterations": [str(k) for k in range(1, 17)],
    "precision": ["fxp4", "fxp8", "fxp16"],
    "pes": ["64", "128", "256"],
}
TANH_BENCH_FORMAT = FxPFormat(total_bits=16, frac_bits=12)
TANH_BENCH_POINTS = 1024


def register(subparsers):
    parser = subparsers.add_parser("sweep", help="accuracy and cycles across one design axis")
    add_io_arguments(parser)
    parser.add_argument("--sweep", required=True, choices=sorted(DEFAULT_POINTS), help="axis to sweep")
    parser.add_argument("--points", help="comma-separated sweep points (default depends on the axis)")
    parser.add_argument("--modes", help="uniform-approx | uniform-acc | heuristic | file=PATH (default uniform-acc)")
    parser.add_argument("--samples", type=int, help="seeded subset of the dataset")
    parser.add_argument("--plot", action="store_true", help="also write sweep.png")
    parser.set_defaults(func=cmd_sweep)


def tanh_max_error(iterations: int) -> float:
    """Worst tanh error on a uniform grid over [-4, 4] at the given depth."""
    fmt = TANH_BENCH_FORMAT
    raw = FxPService.quantize_raw(np.linspace(-4.0, 4.0, TANH_BENCH_POINTS), fmt)
    cfg = CordicConfig.for_activation(fmt, Accuracy.ACCURATE, iterations)
    y = ActivationService.apply_raw(raw, ActivationKind.TANH, cfg)
    return float(np.max(np.abs(FxPService.dequantize_raw(y, fmt) - np.tanh(FxPService.dequantize_raw(raw, fmt)))))


def _with_iterations(model: ModelSpec, k: int) -> ModelSpec:
    layers = []
    for layer in model.layers:
        changes = {}
        if layer.has_macs:
            changes["iterations"] = k
        if DATAPATH[layer.activation] != Datapath.BYPASS:
            changes["af_iterations"] = k
        layers.append(replace(layer, **changes))
    return replace(model, layers=layers)


def _points(args) -> List[str]:
    if args.points is None:
        return DEFAULT_POINTS[args.sweep]
    points = [p.strip() for p in args.points.split(",") if p.strip()]
    if not points:
        raise ConfigurationError(f"empty sweep axis '{args.sweep}'")
    return points


def _int_point(point: str) -> int:
    try:
        return int(point)
    except ValueError:
        raise ConfigurationError(f"sweep point '{point}' is not an integer")


def cmd_sweep(args) -> int:
    points = _points(args)
    manifest = manifest_from_args(args)
    model = RunnerService.ingest(manifest.model)
    dataset = subsample(RunnerService.read_dataset(manifest.dataset), manifest.samples, manifest.seed)
    base_cfg = RunnerService.read_engine_config(manifest.engine)
    modes = manifest.modes or "uniform-acc"

    rows = []
    for point in points:
        cfg, m, override, error = base_cfg, model, None, None
        if args.sweep == "iterations":
            k = _int_point(point)
            m = _with_iterations(model, k)
            error = tanh_max_error(k)
        elif args.sweep == "precision":
            override = FxPFormat.parse(point)
        else:
            try:
                cfg = EngineConfig(**{**base_cfg.model_dump(), "num_pes": _int_point(point)})
            except ValidationError as e:
                raise ConfigurationError(f"sweep point {point}: {e.errors()[0]['msg']}") from e

        formats = RunnerService.layer_formats(m, cfg, override)
        assignment, sensitivity = RunnerService.resolve_assignment(m, formats, modes, cfg, dataset)
        result = RunnerService.evaluate(m, dataset, cfg, assignment, formats=formats, sensitivity=sensitivity).result
        rows.append(SweepRow(
            axis=args.sweep,
            point=point,
            accuracy=result.fxp_accuracy,
            total_cycles=result.cycles.total_cycles,
            effective_macs_per_cycle=result.cycles.effective_macs_per_cycle,
            tanh_max_error=error,
        ))
        app_logger.info(f"Sweep {args.sweep}={point}: {result.fxp_accuracy:.2f}%, {result.cycles.total_cycles} cycles")

    out = Path(manifest.out)
    df = CSVService.sweep_frame(rows)
    CSVService.write_frame(df, out / "sweep.csv")
    if args.plot:
        ReportService.plot_sweep(df, args.sweep, out / "sweep.png")
    write_metadata(out, manifest)
    print(df.to_string(index=False))
    return 0
