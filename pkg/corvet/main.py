import argparse
import sys

from .commands import fixture, loadimg, run, sweep
from .core.config import settings
from .core.exceptions import ConfigurationError, CorvetError, LoadError
from .core.logging import app_logger, setup_logging


def _fail(kind: str, message: str) -> None:
    text = " ".join(str(message).split())
    print(f"corvet: error[{kind}]: {text}", file=sys.stderr)


class CliParser(argparse.ArgumentParser):
    """argparse with single-line usage errors and exit code 1."""

    def error(self, message):
        _fail("usage", message)
        sys.exit(1)


def build_parser() -> CliParser:
    parser = CliParser(prog="corvet", description=f"{settings.APP_NAME} {settings.APP_VERSION}")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log to standard error")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    # Commands
    run.register(subparsers)
    sweep.register(subparsers)
    loadimg.register(subparsers)
    fixture.register(subparsers)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(console=args.verbose or settings.DEBUG)
    try:
        return args.func(args)
    except (ConfigurationError, LoadError) as e:
        _fail(e.kind, e)
        return 1
    except FileNotFoundError as e:
        _fail("load", f"{e.filename}: file not found")
        return 1
    except CorvetError as e:
        _fail(e.kind, e)
        return 2
    except Exception as e:
        app_logger.exception(f"Unhandled error in '{args.command}': {str(e)}")
        _fail("internal", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
