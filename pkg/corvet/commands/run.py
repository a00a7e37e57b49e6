from pathlib import Path

from ..core.logging import app_logger
from ..core.storage import atomic_write
from ..services.csv_service import CSVService
from ..services.report_service import ReportService
from ..services.runner_service import RunnerService
from .common import add_io_arguments, manifest_from_args, subsample, write_metadata


def register(subparsers):
    parser = subparsers.add_parser("run", help="evaluate a model on the engine")
    add_io_arguments(parser)
    parser.add_argument("--modes", help="uniform-approx | uniform-acc | heuristic | file=PATH")
    parser.add_argument("--samples", type=int, help="seeded subset of the dataset")
    parser.add_argument("--trace", action="store_true", help="also write trace.csv")
    parser.set_defaults(func=cmd_run)


def cmd_run(args) -> int:
    manifest = manifest_from_args(args)
    model = RunnerService.ingest(manifest.model)
    dataset = subsample(RunnerService.read_dataset(manifest.dataset), manifest.samples, manifest.seed)
    cfg = RunnerService.read_engine_config(manifest.engine)

    formats = RunnerService.layer_formats(model, cfg)
    assignment, sensitivity = RunnerService.resolve_assignment(model, formats, manifest.modes, cfg, dataset)
    evaluation = RunnerService.evaluate(model, dataset, cfg, assignment, formats=formats, sensitivity=sensitivity)
    result = evaluation.result

    out = Path(manifest.out)
    atomic_write(out / "results.json", result.model_dump_json(indent=2))
    CSVService.write_frame(CSVService.cycles_frame(result.cycles), out / "cycles.csv")
    if manifest.trace:
        CSVService.write_frame(CSVService.trace_frame(evaluation.trace), out / "trace.csv")
    ReportService().write_report(result, out / "report.md")
    write_metadata(out, manifest)

    app_logger.info(f"Run complete: fxp {result.fxp_accuracy:.2f}%, {result.cycles.total_cycles} cycles")
    print(f"{result.model}: float {result.float_accuracy:.2f}% fxp {result.fxp_accuracy:.2f}% "
          f"cycles {result.cycles.total_cycles}")
    return 0
