# /src/cli/main.py
import argparse
import sys
from pathlib import Path
from typing import List, Optional

import yaml
from loguru import logger
from pydantic import ValidationError

from src.adapters.export import write_json
from src.models.experiment import ExperimentConfig
from src.services import ExperimentServices
from src.utils.exceptions import ConfigInvalid, PackLabError
from src.utils.misc import validate_output_dir

COMMANDS = {
    "scales": "solve the Cantor scales h(a_n) = 2^-dn",
    "density": "check the measure density sandwich on seeded samples",
    "cover": "sum the cover masses across k and report their decay",
    "diverge": "certify packing premeasure lower bounds above thresholds M",
    "lemma6": "merge recursive stage packings into one delta-packing",
    "construct-f": "build and validate the piecewise-max gauge f",
    "construct-g": "build and validate the gauge g over a diameter stream",
    "construct-ginterp": "build and validate the interpolated gauge g over scales",
    "order": "classify the trend of h/g on a dyadic grid",
    "optimize": "compare exact, interval-DP and greedy packings on random instances",
}

EXIT_OK, EXIT_FAILED_FLAG, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="packlab", description="Packing premeasure experiments")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="YAML experiment config")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--precision", type=int, help="mpmath significand bits")
        p.add_argument("--seed", type=int, help="seed for sampled inputs (u64)")
        p.add_argument("--workers", type=int, help="worker processes for parallel sweeps")
        p.add_argument("--print-config", action="store_true", dest="print_config",
                       help="print the fully defaulted config as YAML and exit")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    payload = {}
    if args.config is not None:
        try:
            loaded = yaml.safe_load(args.config.read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigInvalid(f"Cannot read config {args.config}: {exc}")
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigInvalid(f"Config {args.config} must be a mapping")
        payload.update(loaded or {})

    payload["command"] = args.command
    for key in ("out", "precision", "seed", "workers"):
        value = getattr(args, key)
        if value is not None:
            payload[key] = value

    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as exc:
        errors = [{"loc": ".".join(map(str, e["loc"])), "msg": e["msg"]} for e in exc.errors()]
        raise ConfigInvalid(f"Invalid config: {errors[0]['loc']}: {errors[0]['msg']}", {"errors": errors})
    except (TypeError, ValueError, ArithmeticError) as exc:
        raise ConfigInvalid(f"Invalid config: {exc}", {"errors": [{"loc": "", "msg": str(exc)}]})


def _error_dir(args: argparse.Namespace, config: Optional[ExperimentConfig]) -> Path:
    if config is not None:
        return config.out
    return args.out if args.out is not None else Path("runs")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    config = None
    try:
        config = load_config(args)
        if args.print_config:
            sys.stdout.write(yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False))
            return EXIT_OK
        record = ExperimentServices(config).run()
        return EXIT_OK if record.passed else EXIT_FAILED_FLAG
    except PackLabError as exc:
        logger.critical(f"{exc.code}: {exc.message}")
        try:
            write_json(exc.to_dict(), validate_output_dir(_error_dir(args, config)) / "error.json")
        except OSError as io_exc:
            logger.error(f"Could not write error.json: {io_exc}")
        return EXIT_CONFIG if isinstance(exc, ConfigInvalid) else EXIT_ERROR
