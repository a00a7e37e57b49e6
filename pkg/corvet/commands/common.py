import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional
import numpy as np

from ..core.config import settings
from ..core.exceptions import LoadError
from ..core.storage import atomic_write
from ..models.network import Dataset
from ..schemas.schemas import RunManifest


def add_io_arguments(parser, dataset: bool = True):
    parser.add_argument("--model", required=True, help="model JSON file")
    if dataset:
        parser.add_argument("--dataset", required=True, help="dataset manifest JSON")
    parser.add_argument("--engine", help="engine configuration JSON")
    parser.add_argument("--out", default=settings.OUTPUT_DIR, help="output directory")
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)


def manifest_from_args(args) -> RunManifest:
    manifest = RunManifest(
        model=args.model,
        dataset=args.dataset,
        engine=args.engine,
        modes=getattr(args, "modes", None),
        out=args.out,
        seed=args.seed,
        samples=getattr(args, "samples", None),
        trace=getattr(args, "trace", False),
    )
    for path in (manifest.model, manifest.dataset, manifest.engine):
        if path is not None and not Path(path).exists():
            raise LoadError("file not found", path=path)
    return manifest


def subsample(dataset: Dataset, samples: Optional[int], seed: int) -> Dataset:
    """Seeded subset, kept in dataset order."""
    if samples is None or samples >= len(dataset):
        return dataset
    rng = np.random.default_rng(seed)
    return dataset.subset(np.sort(rng.choice(len(dataset), size=samples, replace=False)))


def write_metadata(out_dir: Path, manifest: Optional[RunManifest] = None) -> Path:
    # Timestamps live here only, so primary outputs stay byte-identical across runs
    meta = {
        "created": datetime.now(timezone.utc).isoformat(),
        "host": platform.node(),
        "python": platform.python_version(),
        "version": settings.APP_VERSION,
        "argv": sys.argv,
        "manifest": manifest.model_dump() if manifest else None,
    }
    return atomic_write(out_dir / "metadata.json", json.dumps(meta, indent=2))
