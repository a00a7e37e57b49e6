from pathlib import Path

import numpy as np

from ..core.exceptions import LoadError
from ..core.storage import atomic_write
from ..services.memmap_service import MemmapService
from ..services.runner_service import RunnerService


def register(subparsers):
    parser = subparsers.add_parser("loadimg", help="emit the LIFO parameter image of a model")
    parser.add_argument("--model", required=True, help="model JSON file")
    parser.add_argument("--engine", help="engine configuration JSON")
    parser.add_argument("--out", default="params.cvtp", help="image path to write")
    parser.add_argument("--image", help="verify this existing image instead of writing one")
    parser.add_argument("--json", action="store_true", help="also write the JSON debug form")
    parser.add_argument("--verify", action="store_true", help="reload the image and compare")
    parser.set_defaults(func=cmd_loadimg)


def verify_image(path, qm) -> int:
    """Reload an image through the LIFO loader and compare with the quantized raws."""
    addr_bits, format_code, writes = MemmapService.read_image(path)
    if addr_bits != qm.addr_spec.total_bits:
        raise LoadError(f"image has {addr_bits}-bit addresses, model needs {qm.addr_spec.total_bits}", path=str(path))
    if format_code != MemmapService.format_code(qm.formats):
        raise LoadError(f"format code {format_code} does not match the model", path=str(path))

    mem = MemmapService.lifo_load(writes, qm.topology, qm.addr_spec)
    for i, ((w, b), p) in enumerate(zip(MemmapService.layer_params(mem), qm.params)):
        if not (np.array_equal(w, p.weights) and np.array_equal(b, p.bias)):
            raise LoadError(f"layer {i} parameters differ after reload", path=str(path))
    return len(writes)


def cmd_loadimg(args) -> int:
    model = RunnerService.ingest(args.model)
    cfg = RunnerService.read_engine_config(args.engine)
    qm = RunnerService.quantize_model(model, RunnerService.layer_formats(model, cfg))

    if args.image:
        path = Path(args.image)
    else:
        path = Path(args.out)
        code = MemmapService.format_code(qm.formats)
        MemmapService.write_image(path, qm.stream, qm.addr_spec.total_bits, code)
        if args.json:
            atomic_write(path.with_suffix(".json"), MemmapService.image_json(qm.stream, qm.addr_spec.total_bits, code))

    if args.verify or args.image:
        count = verify_image(path, qm)
        print(f"{path}: {count} entries verified")
    else:
        print(f"{path}: {len(qm.stream)} entries, {qm.addr_spec.total_bits}-bit addresses")
    return 0
