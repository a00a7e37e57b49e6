from pathlib import Path

from ..core.storage import atomic_write
from ..schemas.schemas import EngineConfigFile
from ..services.fixture_service import FixtureService
from ..services.runner_service import RunnerService
from .common import write_metadata


def register(subparsers):
    parser = subparsers.add_parser("fixture", help="write the desk-scale digit model and datasets")
    parser.add_argument("--out", default="fixture", help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--train", type=int, default=2000, help="training samples")
    parser.add_argument("--test", type=int, default=600, help="test samples")
    parser.set_defaults(func=cmd_fixture)


def cmd_fixture(args) -> int:
    out = Path(args.out)
    model, train, test = FixtureService.build(args.train, args.test, seed=args.seed)
    RunnerService.save_model(model, out / "model.json")
    RunnerService.write_dataset(train, out / "train.json")
    RunnerService.write_dataset(test, out / "test.json")
    atomic_write(out / "engine.json", EngineConfigFile().model_dump_json(indent=2))
    write_metadata(out)
    print(f"fixture written to {out}")
    return 0
