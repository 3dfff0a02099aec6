import sys
import json
import logging
import argparse
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from mcvd import __version__
from mcvd.controllers.experimentController import build_config, list_experiments, run, validate
from mcvd.database import json_safe
from mcvd.exceptions import ConfigError, MCvDError
from mcvd.schema.experimentSchema import EXPERIMENTS

logger = logging.getLogger(__name__)


def parse_pairs(pairs: Iterable[str], source: str = "--set") -> Dict[str, str]:
    values = {}
    for number, raw in enumerate(pairs, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{number}: expected key=value, got {raw.strip()!r}")
        values[key.strip()] = value.strip()
    return values


def load_config_file(path: str) -> Dict[str, str]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_pairs(lines, source=path)


def run_command(args) -> int:
    try:
        values = load_config_file(args.config) if args.config else {}
        values.update(parse_pairs(args.set or []))
        if args.seed is not None:
            values["seed"] = args.seed
        if args.out is not None:
            values["out_dir"] = args.out
        manifest = run(build_config(values, experiment=args.experiment))
        for name, digest in sorted(manifest.outputs.items()):
            print(f"{name}  sha256:{digest}")
        return 0
    except MCvDError as e:
        logger.error("%s failed: %s", args.experiment, e.detail)
        return e.exit_code
    except Exception as e:
        logger.exception("%s failed unexpectedly: %s", args.experiment, e)
        return 1


def validate_command(args) -> int:
    try:
        diagnostics = validate(load_config_file(args.config))
        for diagnostic in diagnostics:
            print(diagnostic)
        if any(d.level == "error" for d in diagnostics):
            return ConfigError.exit_code
        return 0
    except MCvDError as e:
        logger.error("validation failed: %s", e.detail)
        return e.exit_code
    except Exception as e:
        logger.exception("validation failed unexpectedly: %s", e)
        return 1


def list_command(args) -> int:
    for name, description, defaults in list_experiments():
        print(f"{name}: {description}")
        for key, value in sorted(defaults.items()):
            print(f"    {key} = {json.dumps(json_safe(value))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcvd", description="Molecular communication via diffusion with degradation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a named experiment and write CSV artifacts plus manifest.json")
    r.add_argument("experiment", choices=EXPERIMENTS)
    r.add_argument("--config", default=None, help="flat key=value file applied before --set")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one parameter (repeatable)")
    r.add_argument("--out", default=None, help="output directory (default: $MCVD_OUT_DIR or ./results)")
    r.add_argument("--seed", type=int, default=None)
    r.set_defaults(handler=run_command)

    v = sub.add_parser("validate", help="report invariant violations and suspicious settings without running")
    v.add_argument("config")
    v.set_defaults(handler=validate_command)

    ls = sub.add_parser("list", help="list experiments with their default parameters")
    ls.set_defaults(handler=list_command)
    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(dispatch())
